//! Header/keyword attention statistics, model comparison and heatmap export.

use crate::corpus::{KeywordAnnotation, TokenizedDoc, Tokenizer};
use crate::encoder::{forward, EncoderError};
use crate::train::Checkpoint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no annotated pair is allowed under the attention pattern")]
    NoValidPairs,
    #[error("reports are not comparable: {0}")]
    MismatchedReports(String),
    #[error("range {start}..{end} is outside a document of length {len}")]
    RangeOutOfBounds { start: usize, end: usize, len: usize },
    #[error("layer {layer} does not exist (model has {layers})")]
    NoSuchLayer { layer: usize, layers: usize },
    #[error("annotation refers to unknown document {0:?}")]
    UnknownDocument(String),
    #[error("invalid annotation: {0}")]
    InvalidAnnotation(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSelector {
    #[default]
    Last,
    Index(usize),
}

impl LayerSelector {
    pub fn resolve(self, layers: usize) -> Result<usize, AnalysisError> {
        let layer = match self {
            LayerSelector::Last => layers.saturating_sub(1),
            LayerSelector::Index(i) => i,
        };
        if layer >= layers {
            return Err(AnalysisError::NoSuchLayer { layer, layers });
        }
        Ok(layer)
    }
}

impl FromStr for LayerSelector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(LayerSelector::Last);
        }
        s.parse().map(LayerSelector::Index).map_err(|_| format!("expected `last` or a layer index, got {s:?}"))
    }
}

impl fmt::Display for LayerSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSelector::Last => f.write_str("last"),
            LayerSelector::Index(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionReport {
    pub model_id: String,
    /// Resolved layer index.
    pub layer: usize,
    pub global_attention: bool,
    /// Mean weight a header row puts on a keyword column.
    pub header_to_keyword: f64,
    /// Mean weight a keyword row puts on a header column.
    pub keyword_to_header: f64,
    /// Allowed (header, keyword) pairs averaged over, per direction.
    pub header_to_keyword_pairs: u64,
    pub keyword_to_header_pairs: u64,
    /// Every annotated pair, allowed or not.
    pub annotated_pairs: u64,
    /// SHA-256 over the sorted annotation records.
    pub annotation_fingerprint: String,
}

impl AttentionReport {
    pub fn n_pairs(&self) -> u64 {
        self.header_to_keyword_pairs + self.keyword_to_header_pairs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeChange {
    pub header_to_keyword: f64,
    pub keyword_to_header: f64,
}

fn fingerprint(annotations: &[&KeywordAnnotation]) -> String {
    let mut hasher = Sha256::new();
    for a in annotations {
        hasher.update(serde_json::to_vec(a).expect("annotation serializes"));
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Sums {
    h2k: f64,
    h2k_n: u64,
    k2h: f64,
    k2h_n: u64,
    annotated: u64,
}

/// Head-averaged attention between annotated header and keyword positions,
/// averaged over the pairs the checkpoint's own pattern allows.
pub fn header_keyword_attention(
    checkpoint: &Checkpoint,
    model_id: &str,
    docs: &[TokenizedDoc],
    annotations: &[KeywordAnnotation],
    layer: LayerSelector,
) -> Result<AttentionReport, AnalysisError> {
    let layer = layer.resolve(checkpoint.config().layers)?;
    let by_id: HashMap<&str, &TokenizedDoc> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut sorted: Vec<&KeywordAnnotation> = annotations.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.doc_id, &a.header_positions, &a.keyword_positions).cmp(&(&b.doc_id, &b.header_positions, &b.keyword_positions))
    });
    let mut groups: Vec<(&TokenizedDoc, Vec<&KeywordAnnotation>)> = Vec::new();
    for a in &sorted {
        let doc = *by_id.get(a.doc_id.as_str()).ok_or_else(|| AnalysisError::UnknownDocument(a.doc_id.clone()))?;
        a.validate(doc.len()).map_err(AnalysisError::InvalidAnnotation)?;
        match groups.last_mut() {
            Some((d, list)) if d.doc_id == doc.doc_id => list.push(a),
            _ => groups.push((doc, vec![a])),
        }
    }
    let per_doc: Vec<Result<Sums, AnalysisError>> = groups
        .par_iter()
        .map(|(doc, list)| {
            let mask = if checkpoint.global_attention { doc.header_mask() } else { vec![false; doc.len()] };
            let (_, trace) = forward(&checkpoint.params, &doc.ids, &mask)?;
            let weights = trace.head_mean(layer);
            let pattern = &trace.pattern;
            let mut s = Sums::default();
            for a in list {
                for &h in &a.header_positions {
                    for &k in &a.keyword_positions {
                        s.annotated += 1;
                        if pattern.allows(h, k) {
                            s.h2k += weights.get(h, k);
                            s.h2k_n += 1;
                        }
                        if pattern.allows(k, h) {
                            s.k2h += weights.get(k, h);
                            s.k2h_n += 1;
                        }
                    }
                }
            }
            Ok(s)
        })
        .collect();
    let mut total = Sums::default();
    for s in per_doc {
        let s = s?;
        total.h2k += s.h2k;
        total.h2k_n += s.h2k_n;
        total.k2h += s.k2h;
        total.k2h_n += s.k2h_n;
        total.annotated += s.annotated;
    }
    if total.h2k_n == 0 && total.k2h_n == 0 {
        return Err(AnalysisError::NoValidPairs);
    }
    let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(AttentionReport {
        model_id: model_id.to_string(),
        layer,
        global_attention: checkpoint.global_attention,
        header_to_keyword: mean(total.h2k, total.h2k_n),
        keyword_to_header: mean(total.k2h, total.k2h_n),
        header_to_keyword_pairs: total.h2k_n,
        keyword_to_header_pairs: total.k2h_n,
        annotated_pairs: total.annotated,
        annotation_fingerprint: fingerprint(&sorted),
    })
}

/// `(a - b) / b` per direction. Both reports must cover the same layer and
/// annotation set; their allowed-pair counts may differ with the policy.
pub fn compare_reports(a: &AttentionReport, b: &AttentionReport) -> Result<RelativeChange, AnalysisError> {
    if a.layer != b.layer {
        return Err(AnalysisError::MismatchedReports(format!("layer {} vs {}", a.layer, b.layer)));
    }
    if a.annotation_fingerprint != b.annotation_fingerprint || a.annotated_pairs != b.annotated_pairs {
        return Err(AnalysisError::MismatchedReports("different annotation sets".into()));
    }
    let rel = |x: f64, y: f64| if x == y { 0.0 } else { (x - y) / y };
    Ok(RelativeChange {
        header_to_keyword: rel(a.header_to_keyword, b.header_to_keyword),
        keyword_to_header: rel(a.keyword_to_header, b.keyword_to_header),
    })
}

/// Attention sub-matrix over `range` as CSV: a header row and a first column
/// of token strings. Disallowed cells are exactly zero.
pub fn export_heatmap(
    checkpoint: &Checkpoint,
    doc: &TokenizedDoc,
    tokenizer: &impl Tokenizer,
    layer: LayerSelector,
    range: Range<usize>,
) -> Result<String, AnalysisError> {
    if range.start >= range.end || range.end > doc.len() {
        return Err(AnalysisError::RangeOutOfBounds { start: range.start, end: range.end, len: doc.len() });
    }
    let layer = layer.resolve(checkpoint.config().layers)?;
    let mask = if checkpoint.global_attention { doc.header_mask() } else { vec![false; doc.len()] };
    let (_, trace) = forward(&checkpoint.params, &doc.ids, &mask)?;
    let weights = trace.head_mean(layer);
    let label = |i: usize| {
        let id = doc.ids[i];
        format!("{i}:{}", tokenizer.token(id).unwrap_or("[UNK]"))
    };
    let mut out = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once(String::new()).chain(range.clone().map(label)).collect();
    out.write_record(&header).expect("in-memory write");
    for i in range.clone() {
        let row: Vec<String> = std::iter::once(label(i))
            .chain(range.clone().map(|j| format!("{:e}", weights.get(i, j))))
            .collect();
        out.write_record(&row).expect("in-memory write");
    }
    let bytes = out.into_inner().expect("in-memory flush");
    Ok(String::from_utf8(bytes).expect("utf-8 labels"))
}

//! Corpus-level structure statistics.

use super::DocumentTree;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("corpus is empty")]
    EmptyCorpus,
}

/// Summary of one metric; `sd` is the population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
}

impl MetricStats {
    /// Exact for integer data: mean and variance come from integer sums.
    pub fn from_counts(values: &[u64]) -> Option<Self> {
        let n = values.len() as u128;
        if n == 0 {
            return None;
        }
        let sum: u128 = values.iter().map(|&v| v as u128).sum();
        let sum_sq: u128 = values.iter().map(|&v| (v as u128) * (v as u128)).sum();
        // n^2 * variance = n * sum(x^2) - sum(x)^2, non-negative and exact
        let scaled_var = n * sum_sq - sum * sum;
        Some(Self {
            min: *values.iter().min().expect("non-empty") as f64,
            max: *values.iter().max().expect("non-empty") as f64,
            mean: sum as f64 / n as f64,
            sd: (scaled_var as f64).sqrt() / n as f64,
        })
    }

    /// Welford's single-pass update for real-valued data.
    pub fn from_reals(values: &[f64]) -> Option<Self> {
        let (&first, rest) = values.split_first()?;
        let (mut min, mut max, mut mean, mut m2) = (first, first, first, 0.0);
        for (i, &x) in rest.iter().enumerate() {
            let count = (i + 2) as f64;
            let delta = x - mean;
            mean += delta / count;
            m2 += delta * (x - mean);
            min = min.min(x);
            max = max.max(x);
        }
        let all_equal = min == max;
        Some(Self {
            min,
            max,
            mean: if all_equal { min } else { mean.clamp(min, max) },
            sd: if all_equal { 0.0 } else { (m2 / values.len() as f64).sqrt() },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub tokens_per_document: MetricStats,
    pub headers_per_document: MetricStats,
    /// `None` when no document has a header.
    pub tokens_per_header: Option<MetricStats>,
}

pub fn corpus_stats(trees: &[DocumentTree]) -> Result<CorpusStats, StatsError> {
    if trees.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let tokens: Vec<u64> = trees.iter().map(|t| t.root.word_count() as u64).collect();
    let headers: Vec<u64> = trees.iter().map(|t| t.root.header_count() as u64).collect();
    let ratios: Vec<f64> = tokens
        .iter()
        .zip(&headers)
        .filter(|(_, &h)| h > 0)
        .map(|(&t, &h)| t as f64 / h as f64)
        .collect();
    Ok(CorpusStats {
        documents: trees.len(),
        tokens_per_document: MetricStats::from_counts(&tokens).expect("non-empty"),
        headers_per_document: MetricStats::from_counts(&headers).expect("non-empty"),
        tokens_per_header: MetricStats::from_reals(&ratios),
    })
}

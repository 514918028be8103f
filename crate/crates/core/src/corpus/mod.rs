//! Vocabulary, flattening of document trees into role-tagged token
//! sequences, MLM masking and a synthetic header-correlated corpus.

mod mlm;
mod synth;
mod tokenize;
mod vocab;

pub use mlm::{mask_for_mlm, MlmBatch, MlmExample, IGNORE_LABEL, MASK_RATE};
pub use synth::{generate_synthetic_corpus, SyntheticConfig, SyntheticCorpus};
pub use tokenize::{
    chunk_document, filter_by_length, section_starts, tokenize_tree, Role, TokenizedDoc,
};
pub use vocab::{build_vocab, Tokenizer, Vocabulary, CLS, MASK, PAD, RESERVED, SEP, UNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("vocabulary size must exceed the 5 reserved tokens, got {0}")]
    VocabTooSmall(usize),
    #[error("invalid vocabulary file: {0}")]
    BadVocabFile(String),
    #[error("correlation must lie in [0, 1], got {0}")]
    InvalidCorrelation(f64),
    #[error("need at least 2 topics, got {0}")]
    TooFewTopics(usize),
}

/// Ground-truth header/keyword positions for one document, as token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordAnnotation {
    pub doc_id: String,
    pub header_positions: Vec<usize>,
    pub keyword_positions: Vec<usize>,
}

impl KeywordAnnotation {
    /// Indices in range and header/keyword sets disjoint.
    pub fn validate(&self, len: usize) -> Result<(), String> {
        let out_of_range = self
            .header_positions
            .iter()
            .chain(&self.keyword_positions)
            .find(|&&p| p >= len);
        if let Some(p) = out_of_range {
            return Err(format!("{}: position {p} out of range for length {len}", self.doc_id));
        }
        if let Some(p) = self.header_positions.iter().find(|p| self.keyword_positions.contains(p)) {
            return Err(format!("{}: position {p} is both header and keyword", self.doc_id));
        }
        Ok(())
    }
}

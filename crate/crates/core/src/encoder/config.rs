use super::EncoderError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Total local span; token `i` sees `|i - j| <= window / 2`.
    pub window: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Global rows reuse the local Q/K/V projections when true.
    pub share_global_projections: bool,
    /// MLM head reuses the token embedding matrix when true.
    pub tie_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 2,
            d_model: 64,
            d_ff: 128,
            window: 16,
            vocab_size: 500,
            max_len: 64,
            share_global_projections: true,
            tie_embeddings: false,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let positive = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_len", self.max_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(EncoderError::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(EncoderError::InvalidConfig(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !self.window.is_multiple_of(2) {
            return Err(EncoderError::InvalidConfig(format!("window {} must be even", self.window)));
        }
        Ok(())
    }
}

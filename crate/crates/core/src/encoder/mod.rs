//! Transformer encoder with sliding-window plus global-token attention.
//!
//! Everything runs in `f64`. Attention is evaluated per row over an explicit
//! list of allowed key positions, so the cost is proportional to the number
//! of allowed pairs rather than `n^2`.

mod attention;
mod config;
mod model;
mod params;
mod pattern;

pub use attention::{dense_reference_attention, sparse_attention, SparseWeights};
pub use config::ModelConfig;
pub use model::{
    forward, loss_and_gradients, loss_and_gradients_scaled, mlm_loss, ActivationTrace,
    LossAndGradients,
};
pub use params::{LayerParams, Parameters};
pub use pattern::{pair_count, AttentionPattern};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("global mask length {mask} does not match sequence length {len}")]
    MaskLength { mask: usize, len: usize },
    #[error("no masked positions to score")]
    NoMaskedPositions,
}

//! Structure-aware masked-language-model pre-training.
//!
//! The pipeline extracts a section hierarchy from LaTeX sources
//! ([`latex`]), flattens it into role-tagged token sequences ([`corpus`]),
//! pre-trains a sliding-window encoder whose header tokens attend globally
//! ([`encoder`], [`train`]), and measures how attention between headers and
//! keywords shifts relative to a twin trained without global tokens
//! ([`analysis`]).

pub mod corpus;
pub mod latex;
pub mod encoder;
pub mod analysis;
pub mod cli;
pub mod store;
pub mod train;

//! Session-level quality scoring of therapy transcripts.
//!
//! Utterance embeddings run through a bidirectional GRU, additive attention
//! and a small MLP (one head for the binary total-score task or eleven heads
//! for per-code regression), optionally fused with one-hot session metadata.
//! The crate also carries the training loop, grouped cross-validation, paired
//! bootstrap testing, attention saliency curves and a tf-idf + linear SVM
//! baseline.

pub mod baseline;
pub mod config;
pub mod error;
pub mod data;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod seeds;
pub mod training;

pub use error::{Error, Result};

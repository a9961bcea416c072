//! Cross-lingual capsule-network text classifier.
//!
//! Two parallel towers (source text and its translation) each run
//! embedding lookup, a recurrent feature extractor, and a capsule layer
//! with dynamic routing; the flattened capsule outputs are concatenated
//! and classified. Embeddings can be retrofitted against hate-speech
//! lexicons before training.

pub mod capsule;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod lexinfuse;
pub mod model;
pub mod numerics;
pub mod rng;

pub use error::{CcnlError, Result};

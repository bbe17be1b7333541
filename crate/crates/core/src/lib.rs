//! Discrete audio language modeling at desk scale: a vector-quantized
//! convolutional codec, a causal transformer over its tokens, a log-mel +
//! k-means baseline tokenizer, and the evaluation harness.

pub mod digest;
pub mod dsp;
mod error;
pub mod io;
pub mod seed;

pub use digest::Digest;
pub use error::{Error, Result};
pub mod container;
pub mod tokens;

pub use tokens::TokenSequence;
pub mod codec;
pub mod lm;
pub mod baseline;
pub mod eval;

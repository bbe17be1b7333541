//! Causal transformer over codec tokens, its training loop, sampling, and the
//! prompt-to-continuation pipeline.

mod checkpoint;
mod config;
mod continuation;
mod infer;
mod model;
mod sample;
mod train;

pub use checkpoint::LM_MAGIC;
pub use config::{LmConfig, LmTrainConfig};
pub use continuation::{continue_audio, Continuation, SamplingParams};
pub use infer::KvCache;
pub use model::{LanguageModel, IGNORE};
pub use sample::sample_next;
pub use train::{bits_per_token, corpus_loss, eval_windows, train_lm, train_windows, LmTrainResult, TokenCorpus};

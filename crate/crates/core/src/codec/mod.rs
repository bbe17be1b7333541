//! Convolutional VQ codec: encoder, EMA-codebook quantizer, decoder and the
//! reconstruction losses.

mod checkpoint;
mod config;
mod loss;
mod model;
mod quantizer;
mod train;

pub use checkpoint::CODEC_MAGIC;
pub use config::{CodecConfig, CodecTrainConfig, StftResolution, PAPER_GRID_K, PAPER_GRID_R_MS};
pub use loss::{codec_loss, loss_graph, LossReport};
pub use model::Codec;
pub use quantizer::{nearest, Codebook, Quantized};
pub use train::{train_codec, CodecTrainResult, StepLog};

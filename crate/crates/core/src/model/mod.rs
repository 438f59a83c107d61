//! The segmentation network and its training loop.
//!
//! A whole image goes in as `[1,H,W,C]` and per-pixel logits come out in
//! one pass; there is no patching. The encoder alternates a spatial branch
//! (one scan over all pixels in row-major order) with a spectral branch
//! (one scan over each pixel's channel groups) and merges them with learned
//! scalar weights. [`config`] pins every shape, [`train`] runs the loop
//! with best-validation retention, and [`checkpoint`] round-trips the
//! result byte-exactly.

mod blocks;
mod checkpoint;
mod config;
mod loss;
mod net;
mod train;

pub use blocks::{
    Embedding, EncoderBlock, FusionWeights, GroupNorm, SegHead, SpatialMambaBlock,
    SpectralMambaBlock,
};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ConfigError, EncoderVariant, ModelConfig};
pub use loss::{masked_cross_entropy, predict_classes, LossError};
pub use net::Model;
pub use train::{train, EpochRecord, TrainError, TrainOutcome};

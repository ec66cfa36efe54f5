//! Denoising autoencoder for two-channel IQ frames: dilated 1-D convolution
//! encoder, fully connected bottleneck, transpose-convolution decoder and a
//! final linear resampling to the input length.
//!
//! Everything is implemented directly on flat parameter vectors with
//! hand-written reverse-mode gradients; GEMM is delegated to `matrixmultiply`.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod float;
pub mod gradcheck;
pub mod model;
pub mod normalize;
pub mod ops;
pub mod train;

pub use checkpoint::{load_checkpoint, load_weights, save_checkpoint, save_weights, Checkpoint};
pub use config::{Geometry, ModelConfig, Variant};
pub use error::{Result, TcnError};
pub use model::{loss_mse, Model};
pub use normalize::{denoise, normalize_example, training_pair, Scales};
pub use train::{train, History, Pair, TrainConfig, Trainer};

//! Transformer regressor over the two-channel STM image plus the NCC grid.

mod checkpoint;
mod config;
pub mod layers;
mod model;
mod params;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{TrainConfig, VitConfig};
pub use model::{backward, batch_loss_and_grad, extract_patches, forward, loss_and_grad, predict, ForwardCache};
pub use params::{Block, LayerNorm, Linear, VitParams};
pub use train::{loss_curve_csv, split_indices, train, EpochLoss, TrainOutcome, TrainSample};

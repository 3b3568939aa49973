use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::preprocess::AugmentConfig;
use crate::Result;

/// Transformer regressor hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Fixed NCC grid (spectral rows x temporal columns, DC last on each axis).
    pub ncc_rows: usize,
    pub ncc_cols: usize,
    pub ncc_embed_dim: usize,
    pub dropout: f64,
    pub drop_path: f64,
}

impl Default for VitConfig {
    fn default() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            channels: 2,
            embed_dim: 64,
            depth: 2,
            heads: 4,
            mlp_ratio: 4.0,
            ncc_rows: 5,
            ncc_cols: 8,
            ncc_embed_dim: 64,
            dropout: 0.1,
            drop_path: 0.0,
        }
    }
}

impl VitConfig {
    /// ViT-Base dimensions (12 blocks, 12 heads, 768-wide embedding).
    pub fn base() -> Self {
        Self {
            embed_dim: 768,
            depth: 12,
            heads: 12,
            ..Self::default()
        }
    }

    /// Small configuration for gradient checks and smoke tests.
    pub fn tiny() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            channels: 2,
            embed_dim: 16,
            depth: 2,
            heads: 2,
            mlp_ratio: 2.0,
            ncc_rows: 3,
            ncc_cols: 4,
            ncc_embed_dim: 8,
            dropout: 0.0,
            drop_path: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return invalid("image_size must be a positive multiple of patch_size");
        }
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return invalid("embed_dim must be divisible by heads");
        }
        if self.channels == 0 || self.depth == 0 || self.ncc_embed_dim == 0 {
            return invalid("channels, depth and ncc_embed_dim must be positive");
        }
        if self.ncc_rows == 0 || self.ncc_cols == 0 {
            return invalid("NCC grid must be non-empty");
        }
        if !(self.mlp_ratio > 0.0) {
            return invalid("mlp_ratio must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.drop_path) {
            return invalid("dropout and drop_path must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn n_tokens(&self) -> usize {
        self.n_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn mlp_hidden(&self) -> usize {
        ((self.embed_dim as f64 * self.mlp_ratio).round() as usize).max(1)
    }

    pub fn ncc_len(&self) -> usize {
        self.ncc_rows * self.ncc_cols
    }
}

/// Optimizer and schedule settings (decoupled-weight-decay Adam).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Fraction of samples held out for checkpoint selection.
    pub val_fraction: f64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 16,
            learning_rate: 1e-5,
            weight_decay: 1e-4,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_fraction: 0.1,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch_size must be positive");
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) || !(self.eps > 0.0) {
            return invalid("learning_rate and weight_decay must be non-negative, eps positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return invalid("Adam betas must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return invalid("val_fraction must lie in [0, 1)");
        }
        self.augment.validate()
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::VitConfig;

/// Dense layer `y = x W^T + b`, `W` stored `out x in` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn random(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut l = Self::zeros(in_dim, out_dim);
        fill_trunc_normal(&mut l.w, rng);
        l
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
        }
    }

    fn zeros(dim: usize) -> Self {
        Self {
            gamma: vec![0.0; dim],
            beta: vec![0.0; dim],
        }
    }
}

/// Pre-norm transformer block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Every trainable tensor of the regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VitParams {
    pub config: VitConfig,
    pub patch_embed: Linear,
    pub cls_token: Vec<f64>,
    /// `n_tokens x embed_dim`, row 0 belongs to the [CLS] token.
    pub pos_embed: Vec<f64>,
    pub blocks: Vec<Block>,
    pub ln_final: LayerNorm,
    pub ncc_proj: Linear,
    /// Maps `[cls ; ncc embedding]` to one logit.
    pub head: Linear,
}

const INIT_STD: f64 = 0.02;

fn fill_trunc_normal(v: &mut [f64], rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    for x in v.iter_mut() {
        *x = loop {
            let s: f64 = normal.sample(rng);
            if s.abs() <= 2.0 * INIT_STD {
                break s;
            }
        };
    }
}

impl VitParams {
    /// Truncated-normal (std 0.02) weights, zero biases, unit LayerNorm gains.
    pub fn init(config: &VitConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embed_dim;
        let mut cls_token = vec![0.0; d];
        fill_trunc_normal(&mut cls_token, &mut rng);
        let mut pos_embed = vec![0.0; config.n_tokens() * d];
        fill_trunc_normal(&mut pos_embed, &mut rng);
        let patch_embed = Linear::random(config.patch_dim(), d, &mut rng);
        let blocks = (0..config.depth)
            .map(|_| Block {
                ln1: LayerNorm::new(d),
                qkv: Linear::random(d, 3 * d, &mut rng),
                proj: Linear::random(d, d, &mut rng),
                ln2: LayerNorm::new(d),
                fc1: Linear::random(d, config.mlp_hidden(), &mut rng),
                fc2: Linear::random(config.mlp_hidden(), d, &mut rng),
            })
            .collect();
        Self {
            config: config.clone(),
            patch_embed,
            cls_token,
            pos_embed,
            blocks,
            ln_final: LayerNorm::new(d),
            ncc_proj: Linear::random(config.ncc_len(), config.ncc_embed_dim, &mut rng),
            head: Linear::random(d + config.ncc_embed_dim, 1, &mut rng),
        }
    }

    /// Same shapes, every value zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let c = &self.config;
        let d = c.embed_dim;
        Self {
            config: c.clone(),
            patch_embed: Linear::zeros(c.patch_dim(), d),
            cls_token: vec![0.0; d],
            pos_embed: vec![0.0; c.n_tokens() * d],
            blocks: (0..c.depth)
                .map(|_| Block {
                    ln1: LayerNorm::zeros(d),
                    qkv: Linear::zeros(d, 3 * d),
                    proj: Linear::zeros(d, d),
                    ln2: LayerNorm::zeros(d),
                    fc1: Linear::zeros(d, c.mlp_hidden()),
                    fc2: Linear::zeros(c.mlp_hidden(), d),
                })
                .collect(),
            ln_final: LayerNorm::zeros(d),
            ncc_proj: Linear::zeros(c.ncc_len(), c.ncc_embed_dim),
            head: Linear::zeros(d + c.ncc_embed_dim, 1),
        }
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("patch_embed.w".into(), &self.patch_embed.w),
            ("patch_embed.b".into(), &self.patch_embed.b),
            ("cls_token".into(), &self.cls_token),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend([
                (format!("blocks.{i}.ln1.gamma"), b.ln1.gamma.as_slice()),
                (format!("blocks.{i}.ln1.beta"), &b.ln1.beta),
                (format!("blocks.{i}.qkv.w"), &b.qkv.w),
                (format!("blocks.{i}.qkv.b"), &b.qkv.b),
                (format!("blocks.{i}.proj.w"), &b.proj.w),
                (format!("blocks.{i}.proj.b"), &b.proj.b),
                (format!("blocks.{i}.ln2.gamma"), &b.ln2.gamma),
                (format!("blocks.{i}.ln2.beta"), &b.ln2.beta),
                (format!("blocks.{i}.fc1.w"), &b.fc1.w),
                (format!("blocks.{i}.fc1.b"), &b.fc1.b),
                (format!("blocks.{i}.fc2.w"), &b.fc2.w),
                (format!("blocks.{i}.fc2.b"), &b.fc2.b),
            ]);
        }
        out.extend([
            ("ln_final.gamma".to_string(), self.ln_final.gamma.as_slice()),
            ("ln_final.beta".into(), &self.ln_final.beta),
            ("ncc_proj.w".into(), &self.ncc_proj.w),
            ("ncc_proj.b".into(), &self.ncc_proj.b),
            ("head.w".into(), &self.head.w),
            ("head.b".into(), &self.head.b),
        ]);
        out
    }

    /// Mutable views in the same order as [`VitParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = vec![
            &mut self.patch_embed.w,
            &mut self.patch_embed.b,
            &mut self.cls_token,
            &mut self.pos_embed,
        ];
        for b in self.blocks.iter_mut() {
            out.extend([
                &mut b.ln1.gamma,
                &mut b.ln1.beta,
                &mut b.qkv.w,
                &mut b.qkv.b,
                &mut b.proj.w,
                &mut b.proj.b,
                &mut b.ln2.gamma,
                &mut b.ln2.beta,
                &mut b.fc1.w,
                &mut b.fc1.b,
                &mut b.fc2.w,
                &mut b.fc2.b,
            ]);
        }
        out.extend([
            &mut self.ln_final.gamma,
            &mut self.ln_final.beta,
            &mut self.ncc_proj.w,
            &mut self.ncc_proj.b,
            &mut self.head.w,
            &mut self.head.b,
        ]);
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &VitParams) {
        let src = other.tensors();
        for (dst, (_, s)) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s.iter()) {
                *d += v;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
}

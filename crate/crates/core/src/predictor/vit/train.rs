use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_grad, predict};
use super::params::VitParams;
use super::TrainConfig;
use crate::error::{invalid, Error};
use crate::preprocess::{augment, StmImage};
use crate::Result;

/// One supervised example. `target` is the subjective score scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub image: StmImage,
    pub ncc: Vec<f64>,
    pub target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no validation split is held out.
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest selection loss.
    pub params: VitParams,
    pub curve: Vec<EpochLoss>,
    pub best_epoch: Option<usize>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl AdamW {
    fn new(params: &VitParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut VitParams, grad: &VitParams, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let grads = grad.tensors();
        for (k, p) in params.tensors_mut().into_iter().enumerate() {
            let g = grads[k].1;
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= cfg.learning_rate * cfg.weight_decay * p[i];
                p[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

/// Deterministic split of `n` sample indices into (train, validation).
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 0x5EED)));
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n.saturating_sub(1));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn mean_inference_loss(params: &VitParams, samples: &[TrainSample], idx: &[usize]) -> Result<f64> {
    let losses: Result<Vec<f64>> = idx
        .par_iter()
        .map(|&i| {
            let s = &samples[i];
            let y = predict(params, &s.image.data, &s.ncc)?;
            Ok((y - s.target) * (y - s.target))
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / idx.len() as f64)
}

/// Mini-batch AdamW on squared error.
///
/// Per-sample gradients are computed in parallel and summed in sample order,
/// so results do not depend on the thread count.
pub fn train(init: VitParams, samples: &[TrainSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    init.config.validate()?;
    if samples.is_empty() {
        return invalid("no training samples");
    }
    if let Some(s) = samples.iter().find(|s| !(0.0..=1.0).contains(&s.target)) {
        return invalid(format!("training target {} outside [0, 1]", s.target));
    }
    let (train_idx, val_idx) = split_indices(samples.len(), cfg.val_fraction, cfg.seed);
    let augmenting = cfg.augment.affine_prob > 0.0 || cfg.augment.erase_prob > 0.0 || cfg.augment.noise_prob > 0.0;

    let mut params = init;
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut opt = AdamW::new(&params);
    let mut order = train_idx.clone();
    let mut diverged = None;

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(cfg.seed, epoch as u64 + 1)));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, VitParams)>> = batch
                .par_iter()
                .map(|&i| {
                    let s = &samples[i];
                    let sample_seed = mix(mix(cfg.seed, epoch as u64 + 1), i as u64 + 1);
                    let aug;
                    let image = if augmenting {
                        aug = augment(&s.image, &cfg.augment, sample_seed)?;
                        &aug
                    } else {
                        &s.image
                    };
                    loss_and_grad(&params, &image.data, &s.ncc, s.target, Some(sample_seed ^ 1))
                })
                .collect();
            let mut grad = params.zeros_like();
            for r in results {
                match r {
                    Ok((loss, g)) => {
                        epoch_loss += loss;
                        grad.add_assign(&g);
                    }
                    Err(Error::Numeric { layer, detail }) => {
                        diverged = Some(format!("epoch {epoch}: {layer}: {detail}"));
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            grad.scale(1.0 / batch.len() as f64);
            opt.step(&mut params, &grad, cfg);
            if !params.all_finite() {
                diverged = Some(format!("epoch {epoch}: parameters became non-finite"));
                break 'epochs;
            }
        }
        let train_loss = epoch_loss / order.len() as f64;
        let val_loss = if val_idx.is_empty() {
            None
        } else {
            match mean_inference_loss(&params, samples, &val_idx) {
                Ok(v) => Some(v),
                Err(Error::Numeric { layer, detail }) => {
                    diverged = Some(format!("epoch {epoch}: {layer}: {detail}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        };
        if !train_loss.is_finite() {
            diverged = Some(format!("epoch {epoch}: non-finite training loss"));
            break;
        }
        info!("epoch {epoch}: train_loss {train_loss:.6} val_loss {val_loss:?}");
        curve.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        let selection = val_loss.unwrap_or(train_loss);
        if selection < best_loss {
            best_loss = selection;
            best_epoch = Some(epoch);
            best = params.clone();
        }
    }
    if let Some(msg) = &diverged {
        warn!("training diverged, keeping last good parameters: {msg}");
    }
    Ok(TrainOutcome {
        params: best,
        curve,
        best_epoch,
        diverged,
        train_indices: train_idx,
        val_indices: val_idx,
    })
}

/// `epoch,train_loss,val_loss` rows; an empty field when there is no validation split.
pub fn loss_curve_csv(curve: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for e in curve {
        let val = e.val_loss.map(|v| format!("{v:.9e}")).unwrap_or_default();
        out.push_str(&format!("{},{:.9e},{}\n", e.epoch, e.train_loss, val));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::vit::VitConfig;
    use crate::preprocess::DimStackLayout;
    use rand::Rng;

    pub(crate) fn synthetic(cfg: &VitConfig, n: usize, seed: u64) -> Vec<TrainSample> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let s = cfg.image_size;
        (0..n)
            .map(|i| {
                let data: Vec<f64> = (0..2 * s * s).map(|_| r.random::<f64>()).collect();
                TrainSample {
                    image: StmImage {
                        data,
                        height: s,
                        width: s,
                        layout: DimStackLayout {
                            version: 1,
                            n_s: 1,
                            n_t: 1,
                            n_channels: s,
                            n_frames: s,
                        },
                    },
                    ncc: (0..cfg.ncc_len()).map(|_| r.random::<f64>()).collect(),
                    target: 0.1 + 0.8 * (i as f64 / (n.max(2) - 1) as f64),
                }
            })
            .collect()
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (a, b) = split_indices(20, 0.1, 4);
        assert_eq!((a.len(), b.len()), (18, 2));
        assert_eq!(split_indices(20, 0.1, 4), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(split_indices(1, 0.5, 0).1.len(), 0);
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let cfg = VitConfig::tiny();
        let data = synthetic(&cfg, 8, 2);
        let tc = TrainConfig {
            epochs: 200,
            batch_size: 4,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            val_fraction: 0.0,
            ..TrainConfig::default()
        };
        let a = train(VitParams::init(&cfg, 1), &data, &tc).unwrap();
        let b = train(VitParams::init(&cfg, 1), &data, &tc).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.diverged.is_none());
        let first = a.curve.first().unwrap().train_loss;
        let last = a.curve.last().unwrap().train_loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn divergence_returns_last_good_parameters() {
        let cfg = VitConfig::tiny();
        let data = synthetic(&cfg, 4, 2);
        let mut init = VitParams::init(&cfg, 1);
        init.head.b[0] = f64::NAN;
        let tc = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let out = train(init.clone(), &data, &tc).unwrap();
        assert!(out.diverged.is_some());
        assert!(out.curve.is_empty());
        assert_eq!(out.best_epoch, None);
    }

    #[test]
    fn curve_csv_has_header_and_rows() {
        let csv = loss_curve_csv(&[
            EpochLoss { epoch: 0, train_loss: 0.5, val_loss: Some(0.25) },
            EpochLoss { epoch: 1, train_loss: 0.4, val_loss: None },
        ]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,train_loss,val_loss");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with(','));
    }
}


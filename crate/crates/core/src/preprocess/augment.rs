use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::StmImage;
use crate::error::invalid;
use crate::Result;

/// Augmentation settings. Each stage fires with its own probability; all
/// probabilities default to 0 (augmentation off).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub affine_prob: f64,
    pub max_rotation_deg: f64,
    pub max_translation_px: f64,
    pub scale_range: (f64, f64),
    pub erase_prob: f64,
    /// Largest erased fraction of the image area.
    pub erase_max_area: f64,
    pub noise_prob: f64,
    pub noise_sigma: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            affine_prob: 0.0,
            max_rotation_deg: 5.0,
            max_translation_px: 4.0,
            scale_range: (0.95, 1.05),
            erase_prob: 0.0,
            erase_max_area: 0.1,
            noise_prob: 0.0,
            noise_sigma: 0.02,
        }
    }
}

impl AugmentConfig {
    /// Default ranges with every stage enabled at probability 0.5.
    pub fn training() -> Self {
        Self {
            affine_prob: 0.5,
            erase_prob: 0.5,
            noise_prob: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.affine_prob, self.erase_prob, self.noise_prob] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("augmentation probability {p} outside [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.erase_max_area) {
            return invalid("erase_max_area must lie in [0, 1]");
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return invalid("scale_range must be positive and ordered");
        }
        if self.max_rotation_deg < 0.0 || self.max_translation_px < 0.0 || self.noise_sigma < 0.0 {
            return invalid("augmentation magnitudes must be non-negative");
        }
        Ok(())
    }
}

fn sample_clamped(plane: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
    let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Affine warp, one random erased rectangle, and additive Gaussian noise,
/// in that order. Geometric stages use the same draw for both channels.
/// Output is a pure function of `(image, config, seed)`.
pub fn augment(image: &StmImage, config: &AugmentConfig, seed: u64) -> Result<StmImage> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (image.height, image.width);
    let mut out = image.clone();

    if rng.random::<f64>() < config.affine_prob {
        let angle = (rng.random::<f64>() * 2.0 - 1.0) * config.max_rotation_deg.to_radians();
        let tx = (rng.random::<f64>() * 2.0 - 1.0) * config.max_translation_px;
        let ty = (rng.random::<f64>() * 2.0 - 1.0) * config.max_translation_px;
        let (lo, hi) = config.scale_range;
        let scale = lo + rng.random::<f64>() * (hi - lo);
        let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
        let (sin, cos) = angle.sin_cos();
        for ch in 0..StmImage::CHANNELS {
            let src = image.channel(ch).to_vec();
            let dst = out.channel_mut(ch);
            for r in 0..h {
                for c in 0..w {
                    // Inverse map output pixel to source coordinates.
                    let dx = (c as f64 - cx - tx) / scale;
                    let dy = (r as f64 - cy - ty) / scale;
                    let sx = cos * dx + sin * dy + cx;
                    let sy = -sin * dx + cos * dy + cy;
                    dst[r * w + c] = sample_clamped(&src, h, w, sy, sx);
                }
            }
        }
    }

    if rng.random::<f64>() < config.erase_prob {
        let total = (h * w) as f64;
        let cap = (config.erase_max_area * total).floor() as usize;
        if cap >= 1 {
            let area = (0.2 + 0.8 * rng.random::<f64>()) * cap as f64;
            let aspect = (0.3f64.ln() + rng.random::<f64>() * (3.3f64.ln() - 0.3f64.ln())).exp();
            let mut eh = ((area * aspect).sqrt().round() as usize).clamp(1, h);
            let mut ew = ((area / aspect).sqrt().round() as usize).clamp(1, w);
            while eh * ew > cap {
                if eh >= ew {
                    eh -= 1;
                } else {
                    ew -= 1;
                }
            }
            let top = rng.random_range(0..=h - eh);
            let left = rng.random_range(0..=w - ew);
            for ch in 0..StmImage::CHANNELS {
                let plane = out.channel_mut(ch);
                let mean = plane.iter().sum::<f64>() / plane.len() as f64;
                for r in top..top + eh {
                    plane[r * w + left..r * w + left + ew].fill(mean);
                }
            }
        }
    }

    if rng.random::<f64>() < config.noise_prob && config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma)
            .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
        for v in out.data.iter_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::DimStackLayout;

    fn image(h: usize, w: usize) -> StmImage {
        let data = (0..2 * h * w)
            .map(|i| ((i * 37 % 101) as f64) / 100.0)
            .collect();
        StmImage {
            data,
            height: h,
            width: w,
            layout: DimStackLayout {
                version: 1,
                n_s: 1,
                n_t: 1,
                n_channels: h,
                n_frames: w,
            },
        }
    }

    #[test]
    fn disabled_is_identity() {
        let img = image(12, 10);
        assert_eq!(augment(&img, &AugmentConfig::default(), 7).unwrap(), img);
    }

    #[test]
    fn same_seed_same_output() {
        let img = image(20, 20);
        let cfg = AugmentConfig::training();
        let a = augment(&img, &cfg, 99).unwrap();
        let b = augment(&img, &cfg, 99).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn erasing_touches_one_small_rectangle() {
        let (h, w) = (32, 24);
        let img = image(h, w);
        let cfg = AugmentConfig {
            erase_prob: 1.0,
            erase_max_area: 0.1,
            ..AugmentConfig::default()
        };
        for seed in 0..50 {
            let out = augment(&img, &cfg, seed).unwrap();
            let mut bbox = (usize::MAX, 0usize, usize::MAX, 0usize);
            let mut changed = 0;
            for ch in 0..2 {
                for r in 0..h {
                    for c in 0..w {
                        if out.get(ch, r, c) != img.get(ch, r, c) {
                            changed += 1;
                            bbox = (bbox.0.min(r), bbox.1.max(r), bbox.2.min(c), bbox.3.max(c));
                        }
                    }
                }
            }
            assert!(changed > 0, "seed {seed}: nothing erased");
            let box_area = (bbox.1 - bbox.0 + 1) * (bbox.3 - bbox.2 + 1);
            assert!(box_area as f64 <= 0.1 * (h * w) as f64, "seed {seed}: {box_area}");
        }
    }

    #[test]
    fn noise_stays_in_unit_range() {
        let img = image(8, 8);
        let cfg = AugmentConfig {
            noise_prob: 1.0,
            ..AugmentConfig::default()
        };
        let out = augment(&img, &cfg, 3).unwrap();
        assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(out.data, img.data);
    }

    #[test]
    fn invalid_probability_rejected() {
        let cfg = AugmentConfig {
            noise_prob: 1.5,
            ..AugmentConfig::default()
        };
        assert!(augment(&image(4, 4), &cfg, 0).is_err());
    }
}

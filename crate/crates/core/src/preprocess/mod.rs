//! Turns a clean/degraded STM tensor pair into a fixed-size two-channel
//! image: dimensional stacking (mosaic), min-max normalization and bilinear
//! resizing, with optional augmentation.

mod augment;

pub use augment::{augment, AugmentConfig};

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::stm::StmTensor;
use crate::Result;

pub const DEFAULT_IMAGE_SIZE: usize = 224;
pub const LAYOUT_VERSION: u32 = 1;

/// Single-channel image, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Image2D {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Image2D {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!("image data has {} values, expected {rows}x{cols}", data.len()));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// How an `(N_S, N_T, C, F)` tensor is tiled into a mosaic: sub-image
/// `(S, T)` occupies rows `S*C .. (S+1)*C` and columns `T*F .. (T+1)*F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimStackLayout {
    pub version: u32,
    pub n_s: usize,
    pub n_t: usize,
    pub n_channels: usize,
    pub n_frames: usize,
}

impl DimStackLayout {
    pub fn rows(&self) -> usize {
        self.n_s * self.n_channels
    }

    pub fn cols(&self) -> usize {
        self.n_t * self.n_frames
    }
}

pub fn dim_stack(stm: &StmTensor) -> (Image2D, DimStackLayout) {
    let layout = DimStackLayout {
        version: LAYOUT_VERSION,
        n_s: stm.n_s,
        n_t: stm.n_t,
        n_channels: stm.n_channels,
        n_frames: stm.n_frames,
    };
    let (rows, cols) = (layout.rows(), layout.cols());
    let mut data = vec![0.0; rows * cols];
    for s in 0..stm.n_s {
        for t in 0..stm.n_t {
            for c in 0..stm.n_channels {
                let src = stm.index(s, t, c, 0);
                let dst = (s * stm.n_channels + c) * cols + t * stm.n_frames;
                data[dst..dst + stm.n_frames].copy_from_slice(&stm.data[src..src + stm.n_frames]);
            }
        }
    }
    (Image2D { data, rows, cols }, layout)
}

/// Inverse of [`dim_stack`]; returns the raw `[S, T, c, f]` data.
pub fn dim_unstack(image: &Image2D, layout: &DimStackLayout) -> Result<Vec<f64>> {
    if layout.version != LAYOUT_VERSION {
        return invalid(format!("unsupported mosaic layout version {}", layout.version));
    }
    if image.rows != layout.rows() || image.cols != layout.cols() {
        return invalid("mosaic dimensions do not match layout");
    }
    let (c_len, f_len) = (layout.n_channels, layout.n_frames);
    let mut data = Vec::with_capacity(image.data.len());
    for s in 0..layout.n_s {
        for t in 0..layout.n_t {
            for c in 0..c_len {
                let src = (s * c_len + c) * image.cols + t * f_len;
                data.extend_from_slice(&image.data[src..src + f_len]);
            }
        }
    }
    Ok(data)
}

/// Min-max scaling into `[0, 1]`; constant images become all zeros.
pub fn normalize_image(image: &Image2D) -> Image2D {
    let (lo, hi) = image.min_max();
    let span = hi - lo;
    let data = if span > 0.0 && span.is_finite() {
        image.data.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; image.data.len()]
    };
    Image2D { data, ..*image }
}

/// Corner-aligned bilinear resize: output pixel `i` samples source
/// coordinate `i * (n_in - 1) / (n_out - 1)`.
pub fn bilinear_resize(image: &Image2D, rows: usize, cols: usize) -> Result<Image2D> {
    if image.rows == 0 || image.cols == 0 || rows == 0 || cols == 0 {
        return invalid("cannot resize an empty image");
    }
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let i0 = (x.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (r0, r1, fr) = coord(r, image.rows, rows);
        for c in 0..cols {
            let (c0, c1, fc) = coord(c, image.cols, cols);
            let top = image.get(r0, c0) * (1.0 - fc) + image.get(r0, c1) * fc;
            let bottom = image.get(r1, c0) * (1.0 - fc) + image.get(r1, c1) * fc;
            data.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(Image2D { data, rows, cols })
}

/// Two-channel model input: channel 0 clean, channel 1 degraded, each
/// `height x width`, stored channel-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StmImage {
    pub data: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub layout: DimStackLayout,
}

impl StmImage {
    pub const CHANNELS: usize = 2;

    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn channel_mut(&mut self, ch: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[ch * n..(ch + 1) * n]
    }

    pub fn get(&self, ch: usize, r: usize, c: usize) -> f64 {
        self.data[(ch * self.height + r) * self.width + c]
    }
}

/// DimStack, Norm and BLI for both tensors.
pub fn build_stm_image(clean: &StmTensor, spin: &StmTensor, height: usize, width: usize) -> Result<StmImage> {
    if clean.shape() != spin.shape() {
        return invalid("clean and degraded STM tensors differ in shape");
    }
    let mut data = Vec::with_capacity(2 * height * width);
    let mut layout = None;
    for stm in [clean, spin] {
        let (mosaic, l) = dim_stack(stm);
        let resized = bilinear_resize(&normalize_image(&mosaic), height, width)?;
        data.extend(resized.data);
        layout = Some(l);
    }
    Ok(StmImage {
        data,
        height,
        width,
        layout: layout.expect("two channels"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_tensor(n_s: usize, n_t: usize, c: usize, f: usize) -> StmTensor {
        let mut t = StmTensor::zeros(n_s, n_t, c, f);
        t.data = (0..t.data.len()).map(|i| i as f64).collect();
        t
    }

    #[test]
    fn mosaic_layout_example() {
        let t = ramp_tensor(2, 2, 3, 4);
        let (img, layout) = dim_stack(&t);
        assert_eq!((img.rows, img.cols), (6, 8));
        for c in 0..3 {
            for f in 0..4 {
                assert_eq!(img.get(c, 4 + f), t.get(0, 1, c, f));
            }
        }
        assert_eq!(dim_unstack(&img, &layout).unwrap(), t.data);
    }

    #[test]
    fn single_band_is_identity() {
        let t = ramp_tensor(1, 1, 3, 5);
        let (img, _) = dim_stack(&t);
        assert_eq!(img.data, t.data);
    }

    #[test]
    fn unstack_rejects_mismatch() {
        let t = ramp_tensor(1, 2, 2, 2);
        let (img, mut layout) = dim_stack(&t);
        layout.n_frames = 3;
        assert!(dim_unstack(&img, &layout).is_err());
    }

    #[test]
    fn normalize_examples() {
        let img = Image2D::new(vec![2.0, 6.0, 10.0, 4.0], 2, 2).unwrap();
        let n = normalize_image(&img);
        assert_eq!(n.data, vec![0.0, 0.5, 1.0, 0.25]);
        let c = normalize_image(&Image2D::new(vec![3.0; 4], 2, 2).unwrap());
        assert_eq!(c.data, vec![0.0; 4]);
    }

    #[test]
    fn resize_examples() {
        let img = Image2D::new(vec![0.0, 1.0, 0.0, 1.0], 2, 2).unwrap();
        let r = bilinear_resize(&img, 2, 3).unwrap();
        assert_eq!(r.data, vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0]);
        let same = bilinear_resize(&img, 2, 2).unwrap();
        assert_eq!(same.data, img.data);
        let k = bilinear_resize(&Image2D::new(vec![4.2; 6], 2, 3).unwrap(), 7, 5).unwrap();
        assert!(k.data.iter().all(|&v| (v - 4.2).abs() < 1e-12));
    }

    #[test]
    fn image_channels_normalized() {
        let a = ramp_tensor(2, 3, 4, 5);
        let mut b = a.clone();
        b.data.iter_mut().for_each(|v| *v = 100.0 - *v * 0.5);
        let img = build_stm_image(&a, &b, 16, 16).unwrap();
        for ch in 0..2 {
            let c = img.channel(ch);
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo.abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        }
    }
}

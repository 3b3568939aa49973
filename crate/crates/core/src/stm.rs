//! Spectro-temporal modulation (STM) analysis with a separable Gabor bank.
//!
//! Each axis gets a ladder of Hann-windowed cosine kernels whose center
//! frequencies fall by a constant ratio from `omega_max` down to the lowest
//! frequency whose kernel still fits inside the envelope, plus a DC kernel.
//! Every (spectral, temporal) kernel pair filters the log-compressed
//! cochleagram. The magnitude of the result fills one `C x F` slice of the
//! 4-D tensor.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::invalid;
use crate::periphery::CochleagramEnvelope;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Spectral,
    Temporal,
}

/// Amplitude compression applied to the envelope before modulation filtering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Compression {
    /// `ln(1 + e / floor)`
    Log { floor: f64 },
    Linear,
}

impl Compression {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            Compression::Log { floor } => (e / floor).ln_1p(),
            Compression::Linear => e,
        }
    }
}

impl Default for Compression {
    fn default() -> Self {
        Compression::Log { floor: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StmConfig {
    /// Half-wavelengths inside the Hann envelope.
    pub nu: f64,
    /// Ratio between consecutive center frequencies.
    pub ratio: f64,
    /// Highest temporal modulation center, Hz at the envelope frame rate.
    pub temporal_max_hz: f64,
    /// Highest spectral modulation center, radians per channel.
    pub spectral_omega_max: f64,
    /// Cap on band-pass kernels per axis (the DC kernel is extra).
    pub max_spectral_bands: Option<usize>,
    pub max_temporal_bands: Option<usize>,
    pub compression: Compression,
}

impl Default for StmConfig {
    fn default() -> Self {
        Self {
            nu: 3.5,
            ratio: 2.0,
            temporal_max_hz: 32.0,
            spectral_omega_max: PI,
            max_spectral_bands: Some(4),
            max_temporal_bands: Some(7),
            compression: Compression::default(),
        }
    }
}

/// Modulation center frequencies `omega_max / r^i` down to
/// `omega_min = π ν / size_max`, followed by 0 (the DC channel).
pub fn center_frequencies(omega_max: f64, r: f64, nu: f64, size_max: usize) -> Result<Vec<f64>> {
    if !(omega_max > 0.0 && omega_max <= PI) {
        return invalid(format!("omega_max must lie in (0, π], got {omega_max}"));
    }
    if !(r > 1.0) {
        return invalid(format!("spacing ratio must exceed 1, got {r}"));
    }
    if !(nu >= 1.0) {
        return invalid(format!("nu must be at least 1, got {nu}"));
    }
    if size_max < 2 {
        return invalid(format!("size_max must be at least 2, got {size_max}"));
    }
    let omega_min = omega_min(nu, size_max);
    if omega_max < omega_min {
        log::warn!("omega_max {omega_max:.4} below omega_min {omega_min:.4}; DC channel only");
        return Ok(vec![0.0]);
    }
    let mut out = Vec::new();
    let mut w = omega_max;
    while w >= omega_min {
        out.push(w);
        w /= r;
    }
    out.push(0.0);
    Ok(out)
}

pub fn omega_min(nu: f64, size_max: usize) -> f64 {
    PI * nu / size_max as f64
}

fn odd_floor(n: usize) -> usize {
    if n % 2 == 0 {
        n.saturating_sub(1).max(1)
    } else {
        n
    }
}

/// Support length for a kernel at `omega`.
pub fn kernel_support(omega: f64, nu: f64, size_max: usize) -> usize {
    let cap = odd_floor(size_max);
    if omega <= 0.0 {
        return cap;
    }
    (2 * (nu * PI / omega).round() as usize + 1).min(cap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaborKernel {
    pub samples: Vec<f64>,
    pub omega: f64,
    pub phi: f64,
    pub nu: f64,
    pub axis: Axis,
}

impl GaborKernel {
    pub fn half_width(&self) -> usize {
        self.samples.len() / 2
    }
}

/// Hann-windowed cosine `w(t) cos(ω t + φ)` centered on the middle sample.
/// The Hann window spans the support without zero end points.
pub fn gabor_kernel(omega: f64, nu: f64, phi: f64, size_max: usize, axis: Axis) -> Result<GaborKernel> {
    if !(0.0..=PI).contains(&omega) {
        return invalid(format!("kernel frequency must lie in [0, π], got {omega}"));
    }
    if size_max == 0 {
        return invalid("size_max must be positive");
    }
    let len = kernel_support(omega, nu, size_max);
    let m = (len / 2) as isize;
    let samples = (-m..=m)
        .map(|t| {
            let t = t as f64;
            let w = 0.5 * (1.0 + (PI * t / (m as f64 + 1.0)).cos());
            w * (omega * t + phi).cos()
        })
        .collect();
    Ok(GaborKernel {
        samples,
        omega,
        phi,
        nu,
        axis,
    })
}

/// DFT length used to locate a kernel's peak frequency-domain magnitude.
pub fn response_grid_len(kernel_len: usize) -> usize {
    (8 * kernel_len).next_power_of_two().max(4096)
}

/// `|sum_t x[t] e^{-i w t}|`, evaluated directly.
pub fn dtft_magnitude(samples: &[f64], omega: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (t, &x) in samples.iter().enumerate() {
        let (s, c) = (omega * t as f64).sin_cos();
        re += x * c;
        im -= x * s;
    }
    re.hypot(im)
}

/// Largest `|DTFT|` of `samples` over `[0, π]`: the best bin of a
/// [`response_grid_len`]-point FFT, refined by golden-section search within
/// one bin on either side.
pub fn peak_response(samples: &[f64]) -> f64 {
    let n = response_grid_len(samples.len());
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(samples.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    let (k, grid_peak) = buf[..=n / 2]
        .iter()
        .map(|c| c.norm())
        .enumerate()
        .fold((0, 0.0), |best, (i, m)| if m > best.1 { (i, m) } else { best });
    let step = 2.0 * PI / n as f64;
    let (mut lo, mut hi) = (((k as f64 - 1.0) * step).max(0.0), ((k as f64 + 1.0) * step).min(PI));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (dtft_magnitude(samples, a), dtft_magnitude(samples, b));
    for _ in 0..80 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = dtft_magnitude(samples, b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = dtft_magnitude(samples, a);
        }
    }
    [grid_peak, fa, fb, dtft_magnitude(samples, lo), dtft_magnitude(samples, hi)]
        .into_iter()
        .fold(0.0, f64::max)
}

/// Scales the kernel to unit peak frequency-domain magnitude. Band-pass
/// kernels are made zero-mean first so their DC response vanishes.
pub fn normalize_kernel(kernel: &GaborKernel) -> Result<GaborKernel> {
    let mut samples = kernel.samples.clone();
    if kernel.omega > 0.0 {
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        samples.iter_mut().for_each(|v| *v -= mean);
    }
    let peak = peak_response(&samples);
    let scale = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) || scale <= 1e-14 {
        return invalid("cannot normalize an all-zero kernel");
    }
    samples.iter_mut().for_each(|v| *v /= peak);
    Ok(GaborKernel {
        samples,
        ..kernel.clone()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationBank {
    pub spectral_kernels: Vec<GaborKernel>,
    pub temporal_kernels: Vec<GaborKernel>,
    pub omega_max_s: f64,
    pub omega_max_t: f64,
    pub r: f64,
    pub nu: f64,
    pub compression: Compression,
}

fn axis_kernels(
    omega_max: f64,
    r: f64,
    nu: f64,
    size_max: usize,
    max_bands: Option<usize>,
    axis: Axis,
) -> Result<Vec<GaborKernel>> {
    let centers = center_frequencies(omega_max, r, nu, size_max)?;
    let mut kernels = Vec::with_capacity(centers.len());
    for &w in centers.iter().filter(|&&w| w > 0.0) {
        if max_bands.is_some_and(|cap| kernels.len() >= cap) {
            break;
        }
        if kernel_support(w, nu, size_max) < 3 {
            continue;
        }
        kernels.push(normalize_kernel(&gabor_kernel(w, nu, 0.0, size_max, axis)?)?);
    }
    let dc_size = kernels.last().map_or(size_max, |k| k.samples.len());
    kernels.push(normalize_kernel(&gabor_kernel(0.0, nu, 0.0, dc_size, axis)?)?);
    Ok(kernels)
}

impl ModulationBank {
    /// Builds the bank for an envelope of `n_channels` by `n_frames` sampled at
    /// `frame_rate_hz`.
    pub fn new(config: &StmConfig, n_channels: usize, n_frames: usize, frame_rate_hz: f64) -> Result<Self> {
        let omega_max_t = (2.0 * PI * config.temporal_max_hz / frame_rate_hz).min(PI);
        let omega_max_s = config.spectral_omega_max.min(PI);
        Ok(Self {
            spectral_kernels: axis_kernels(
                omega_max_s,
                config.ratio,
                config.nu,
                n_channels,
                config.max_spectral_bands,
                Axis::Spectral,
            )?,
            temporal_kernels: axis_kernels(
                omega_max_t,
                config.ratio,
                config.nu,
                n_frames,
                config.max_temporal_bands,
                Axis::Temporal,
            )?,
            omega_max_s,
            omega_max_t,
            r: config.ratio,
            nu: config.nu,
            compression: config.compression,
        })
    }

    pub fn n_spectral(&self) -> usize {
        self.spectral_kernels.len()
    }

    pub fn n_temporal(&self) -> usize {
        self.temporal_kernels.len()
    }
}

/// 4-D modulation tensor indexed `[S, T, c, f]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StmTensor {
    pub data: Vec<f64>,
    pub n_s: usize,
    pub n_t: usize,
    pub n_channels: usize,
    pub n_frames: usize,
    /// Spectral centers, radians per channel (last entry is DC).
    pub spectral_centers: Vec<f64>,
    /// Temporal centers, radians per frame (last entry is DC).
    pub temporal_centers: Vec<f64>,
    pub center_frequencies_hz: Vec<f64>,
    pub frame_rate_hz: f64,
    /// Frames at each end influenced by padding.
    pub border_frames: usize,
    /// Channels at each end influenced by padding.
    pub border_channels: usize,
}

impl StmTensor {
    pub fn zeros(n_s: usize, n_t: usize, n_channels: usize, n_frames: usize) -> Self {
        Self {
            data: vec![0.0; n_s * n_t * n_channels * n_frames],
            n_s,
            n_t,
            n_channels,
            n_frames,
            spectral_centers: vec![0.0; n_s],
            temporal_centers: vec![0.0; n_t],
            center_frequencies_hz: vec![0.0; n_channels],
            frame_rate_hz: 1.0,
            border_frames: 0,
            border_channels: 0,
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n_s, self.n_t, self.n_channels, self.n_frames]
    }

    #[inline]
    pub fn index(&self, s: usize, t: usize, c: usize, f: usize) -> usize {
        ((s * self.n_t + t) * self.n_channels + c) * self.n_frames + f
    }

    pub fn get(&self, s: usize, t: usize, c: usize, f: usize) -> f64 {
        self.data[self.index(s, t, c, f)]
    }

    /// The `C x F` slice for modulation channel `(s, t)`.
    pub fn slice(&self, s: usize, t: usize) -> &[f64] {
        let start = self.index(s, t, 0, 0);
        &self.data[start..start + self.n_channels * self.n_frames]
    }

    /// Temporal center of channel `t` in Hz.
    pub fn temporal_center_hz(&self, t: usize) -> f64 {
        self.temporal_centers[t] * self.frame_rate_hz / (2.0 * PI)
    }
}

/// Half-sample symmetric index folding into `[0, n)`.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Same-size convolution with symmetric padding.
pub fn convolve_reflect(x: &[f64], kernel: &[f64], out: &mut [f64]) {
    let half = (kernel.len() / 2) as isize;
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &h) in kernel.iter().enumerate() {
            acc += h * x[reflect_index(i as isize + half - k as isize, n)];
        }
        *o = acc;
    }
}

/// Compressed envelope values, `C x F` row-major.
pub fn compress_envelope(envelope: &CochleagramEnvelope, compression: Compression) -> Vec<f64> {
    envelope.data.iter().map(|&e| compression.apply(e)).collect()
}

/// Filters the compressed envelope with every kernel pair of `bank`.
pub fn stm_analyze(envelope: &CochleagramEnvelope, bank: &ModulationBank) -> Result<StmTensor> {
    let (c_len, f_len) = (envelope.n_channels, envelope.n_frames);
    let min_s = bank.spectral_kernels.iter().map(|k| k.samples.len()).min().unwrap_or(0);
    let min_t = bank.temporal_kernels.iter().map(|k| k.samples.len()).min().unwrap_or(0);
    if bank.spectral_kernels.is_empty() || bank.temporal_kernels.is_empty() {
        return invalid("modulation bank has no kernels");
    }
    if c_len < min_s || f_len < min_t {
        return invalid(format!(
            "envelope {c_len}x{f_len} is smaller than every kernel ({min_s}x{min_t})"
        ));
    }
    let x = compress_envelope(envelope, bank.compression);

    // Spectral pass: one C x F plane per spectral kernel.
    let spectral: Vec<Vec<f64>> = bank
        .spectral_kernels
        .par_iter()
        .map(|k| {
            let mut plane = vec![0.0; c_len * f_len];
            let mut col = vec![0.0; c_len];
            let mut out = vec![0.0; c_len];
            for f in 0..f_len {
                for c in 0..c_len {
                    col[c] = x[c * f_len + f];
                }
                convolve_reflect(&col, &k.samples, &mut out);
                for c in 0..c_len {
                    plane[c * f_len + f] = out[c];
                }
            }
            plane
        })
        .collect();

    let n_s = bank.n_spectral();
    let n_t = bank.n_temporal();
    let slices: Vec<Vec<f64>> = (0..n_s * n_t)
        .into_par_iter()
        .map(|st| {
            let (s, t) = (st / n_t, st % n_t);
            let kernel = &bank.temporal_kernels[t].samples;
            let mut slice = vec![0.0; c_len * f_len];
            for c in 0..c_len {
                let row = &spectral[s][c * f_len..(c + 1) * f_len];
                convolve_reflect(row, kernel, &mut slice[c * f_len..(c + 1) * f_len]);
            }
            slice.iter_mut().for_each(|v| *v = v.abs());
            slice
        })
        .collect();

    Ok(StmTensor {
        data: slices.concat(),
        n_s,
        n_t,
        n_channels: c_len,
        n_frames: f_len,
        spectral_centers: bank.spectral_kernels.iter().map(|k| k.omega).collect(),
        temporal_centers: bank.temporal_kernels.iter().map(|k| k.omega).collect(),
        center_frequencies_hz: envelope.center_frequencies_hz.clone(),
        frame_rate_hz: envelope.frame_rate_hz,
        border_frames: bank.temporal_kernels.iter().map(|k| k.half_width()).max().unwrap_or(0),
        border_channels: bank.spectral_kernels.iter().map(|k| k.half_width()).max().unwrap_or(0),
    })
}

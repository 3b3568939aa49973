//! Gammatone cochlear filterbank on the ERB-rate scale.
//!
//! Each channel is a cascade of identical complex one-pole resonators tuned
//! to the center frequency. Its magnitude response is symmetric about the
//! center, and the pole radius is solved so the -3 dB bandwidth equals the
//! design bandwidth (broadening x ERB) exactly.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::HearingLossLevel;
use crate::dsp::{block_average, block_count, Biquad};
use crate::error::invalid;
use crate::Result;

pub const DEFAULT_F_LO_HZ: f64 = 100.0;
pub const DEFAULT_F_HI_HZ: f64 = 8000.0;
pub const DEFAULT_ORDER: usize = 4;
/// Envelope smoothing cutoff applied before frame-rate reduction.
pub const ENVELOPE_SMOOTHING_HZ: f64 = 1000.0;

/// Glasberg & Moore equivalent rectangular bandwidth in Hz.
pub fn erb_hz(freq_hz: f64) -> f64 {
    24.7 * (4.37 * freq_hz / 1000.0 + 1.0)
}

/// ERB-number (Cams) of a frequency.
pub fn erb_rate(freq_hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * freq_hz).log10()
}

pub fn erb_rate_to_hz(erb_number: f64) -> f64 {
    (10f64.powf(erb_number / 21.4) - 1.0) / 0.00437
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammatoneBank {
    pub level: HearingLossLevel,
    pub center_frequencies_hz: Vec<f64>,
    pub bandwidths_hz: Vec<f64>,
    pub order: usize,
    pub sample_rate_hz: f64,
}

/// Builds the level's channels equally spaced in ERB-number over
/// `[f_lo, f_hi]`, endpoints included.
pub fn design_gammatone_bank(
    level: HearingLossLevel,
    sample_rate_hz: f64,
    f_lo: f64,
    f_hi: f64,
) -> Result<GammatoneBank> {
    GammatoneBank::with_order(level, sample_rate_hz, f_lo, f_hi, DEFAULT_ORDER)
}

impl GammatoneBank {
    pub fn with_order(
        level: HearingLossLevel,
        sample_rate_hz: f64,
        f_lo: f64,
        f_hi: f64,
        order: usize,
    ) -> Result<Self> {
        if !(f_lo > 0.0 && f_lo < f_hi && f_hi < sample_rate_hz / 2.0) {
            return invalid(format!(
                "need 0 < f_lo < f_hi < fs/2, got f_lo={f_lo}, f_hi={f_hi}, fs={sample_rate_hz}"
            ));
        }
        if order == 0 {
            return invalid("gammatone order must be at least 1");
        }
        let n = level.n_channels();
        let (e_lo, e_hi) = (erb_rate(f_lo), erb_rate(f_hi));
        let step = (e_hi - e_lo) / (n - 1) as f64;
        let center_frequencies_hz: Vec<f64> = (0..n)
            .map(|i| {
                if i == n - 1 {
                    f_hi
                } else if i == 0 {
                    f_lo
                } else {
                    erb_rate_to_hz(e_lo + step * i as f64)
                }
            })
            .collect();
        let bandwidths_hz = center_frequencies_hz
            .iter()
            .map(|&cf| level.erb_broadening() * erb_hz(cf))
            .collect();
        Ok(Self {
            level,
            center_frequencies_hz,
            bandwidths_hz,
            order,
            sample_rate_hz,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.center_frequencies_hz.len()
    }

    /// Pole radius giving a -3 dB bandwidth of `bandwidths_hz[k]`.
    ///
    /// With `|H(θ)|^2 ∝ 1 / (1 + 4a sin²(θ/2) / (1-a)²)^n`, the half-power
    /// condition at half-width θ is a quadratic in `a` whose root inside the
    /// unit circle is returned.
    pub fn pole_radius(&self, k: usize) -> f64 {
        let kk = 2f64.powf(1.0 / self.order as f64) - 1.0;
        let half_width = PI * self.bandwidths_hz[k] / self.sample_rate_hz;
        let s = (half_width / 2.0).sin().powi(2);
        let p = 2.0 * kk + 4.0 * s;
        (p - (p * p - 4.0 * kk * kk).sqrt()) / (2.0 * kk)
    }

    /// Complex (analytic-style) output of channel `k` for a real input.
    ///
    /// Gain is normalized so a real tone of amplitude `A` at the center
    /// frequency produces `|z| ≈ A` in steady state.
    pub fn filter_channel(&self, k: usize, signal: &[f64]) -> Vec<Complex64> {
        let a = self.pole_radius(k);
        let w = 2.0 * PI * self.center_frequencies_hz[k] / self.sample_rate_hz;
        let pole = Complex64::from_polar(a, w);
        let gain = 2.0 * (1.0 - a).powi(self.order as i32);
        let mut state = vec![Complex64::new(0.0, 0.0); self.order];
        signal
            .iter()
            .map(|&x| {
                let mut v = Complex64::new(x * gain, 0.0);
                for s in state.iter_mut() {
                    *s = v + pole * *s;
                    v = *s;
                }
                v
            })
            .collect()
    }

    /// Magnitude of the channel's frequency response at `freq_hz`, computed
    /// from the filter coefficients.
    pub fn response_magnitude(&self, k: usize, freq_hz: f64) -> f64 {
        let a = self.pole_radius(k);
        let theta = 2.0 * PI * (freq_hz - self.center_frequencies_hz[k]) / self.sample_rate_hz;
        let denom = (1.0 - 2.0 * a * theta.cos() + a * a).sqrt();
        ((1.0 - a) / denom).powi(self.order as i32)
    }
}

/// Per-channel envelope matrix, `C` rows by `F` frames, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CochleagramEnvelope {
    pub data: Vec<f64>,
    pub n_channels: usize,
    pub n_frames: usize,
    pub frame_rate_hz: f64,
    pub center_frequencies_hz: Vec<f64>,
}

impl CochleagramEnvelope {
    pub fn new(
        data: Vec<f64>,
        n_channels: usize,
        n_frames: usize,
        frame_rate_hz: f64,
        center_frequencies_hz: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != n_channels * n_frames {
            return invalid(format!(
                "envelope data has {} values, expected {n_channels}x{n_frames}",
                data.len()
            ));
        }
        if center_frequencies_hz.len() != n_channels {
            return invalid("one center frequency per envelope channel required");
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("envelope values must be finite and non-negative");
        }
        if !(frame_rate_hz > 0.0) {
            return invalid("envelope frame rate must be positive");
        }
        Ok(Self {
            data,
            n_channels,
            n_frames,
            frame_rate_hz,
            center_frequencies_hz,
        })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_frames..(c + 1) * self.n_frames]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let f = self.n_frames;
        &mut self.data[c * f..(c + 1) * f]
    }

    pub fn get(&self, c: usize, f: usize) -> f64 {
        self.data[c * self.n_frames + f]
    }

    /// Block-averages every channel down to `frame_rate_hz`.
    pub fn decimate(&self, frame_rate_hz: f64) -> Result<Self> {
        if !(frame_rate_hz > 0.0 && frame_rate_hz <= self.frame_rate_hz) {
            return invalid(format!(
                "cannot decimate {} Hz envelope to {frame_rate_hz} Hz",
                self.frame_rate_hz
            ));
        }
        let n_frames = block_count(self.n_frames, self.frame_rate_hz, frame_rate_hz);
        let mut data = Vec::with_capacity(self.n_channels * n_frames);
        for c in 0..self.n_channels {
            data.extend(block_average(self.channel(c), self.frame_rate_hz, frame_rate_hz));
        }
        Ok(Self {
            data,
            n_channels: self.n_channels,
            n_frames,
            frame_rate_hz,
            center_frequencies_hz: self.center_frequencies_hz.clone(),
        })
    }
}

/// Decomposes `signal` with `bank` and returns per-channel envelopes at
/// `frame_rate_hz`.
///
/// Envelope = magnitude of the complex channel output, smoothed by a 1 kHz
/// Butterworth low-pass, then block-averaged to the frame rate.
pub fn cochlear_analyze(
    signal: &[f64],
    bank: &GammatoneBank,
    frame_rate_hz: f64,
) -> Result<CochleagramEnvelope> {
    if signal.is_empty() {
        return invalid("empty signal");
    }
    if !(frame_rate_hz > 0.0 && frame_rate_hz <= bank.sample_rate_hz) {
        return invalid(format!(
            "frame rate {frame_rate_hz} Hz must be in (0, {}]",
            bank.sample_rate_hz
        ));
    }
    let fs = bank.sample_rate_hz;
    let smooth = ENVELOPE_SMOOTHING_HZ < 0.45 * fs;
    let rows: Vec<Vec<f64>> = (0..bank.n_channels())
        .into_par_iter()
        .map(|k| {
            let mut lp = Biquad::butterworth_lowpass(fs, ENVELOPE_SMOOTHING_HZ);
            let env: Vec<f64> = bank
                .filter_channel(k, signal)
                .iter()
                .map(|z| {
                    let m = z.norm();
                    if smooth {
                        lp.process(m)
                    } else {
                        m
                    }
                })
                .collect();
            block_average(&env, fs, frame_rate_hz)
                .into_iter()
                .map(|v| v.max(0.0))
                .collect()
        })
        .collect();
    let n_frames = rows[0].len();
    CochleagramEnvelope::new(
        rows.concat(),
        bank.n_channels(),
        n_frames,
        frame_rate_hz,
        bank.center_frequencies_hz.clone(),
    )
}

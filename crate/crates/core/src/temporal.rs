//! Severity-dependent temporal modulation transfer function (TMTF): a
//! first-order low-pass applied to every cochlear envelope channel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::invalid;
use crate::periphery::{CochleagramEnvelope, HearingLossLevel};
use crate::Result;

/// Time constant and its 3 dB cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TmtfParams {
    pub tau_ms: f64,
    pub f_cutoff_hz: f64,
}

/// 3 dB cutoff of a first-order low-pass with time constant `tau_ms` (ms).
pub fn cutoff_frequency_hz(tau_ms: f64) -> f64 {
    1000.0 / (2.0 * PI * tau_ms)
}

impl TmtfParams {
    pub fn from_tau_ms(tau_ms: f64) -> Result<Self> {
        if !(tau_ms > 0.0 && tau_ms.is_finite()) {
            return invalid(format!("time constant must be positive, got {tau_ms} ms"));
        }
        Ok(Self {
            tau_ms,
            f_cutoff_hz: cutoff_frequency_hz(tau_ms),
        })
    }
}

/// Time constant (ms) per hearing-loss level.
pub const TAU_MS: [(HearingLossLevel, f64); 4] = [
    (HearingLossLevel::NormalHearing, 2.2),
    (HearingLossLevel::MildLoss, 3.4),
    (HearingLossLevel::ModerateLoss, 5.0),
    (HearingLossLevel::SevereLoss, 9.4),
];

pub fn tau_for_level(level: HearingLossLevel) -> TmtfParams {
    let tau = TAU_MS[level.index()].1;
    TmtfParams {
        tau_ms: tau,
        f_cutoff_hz: cutoff_frequency_hz(tau),
    }
}

/// Analog magnitude response `1 / sqrt(1 + (2π f τ)²)`, τ given in ms.
pub fn tmtf_magnitude(f_hz: f64, tau_ms: f64) -> f64 {
    let x = 2.0 * PI * f_hz * tau_ms * 1e-3;
    1.0 / (1.0 + x * x).sqrt()
}

/// Discrete first-order section `y[n] = g (x[n] + β x[n-1]) + α y[n-1]`.
///
/// Derived from the bilinear one-pole. The zero `-β` is moved off Nyquist so
/// the discrete power response `(1 - p u) / (1 + q u)`, `u = 1 - cos ω`,
/// equals the analog response exactly at DC, at the cutoff and at twice the
/// cutoff. When twice the cutoff is too close to Nyquist, the plain bilinear
/// transform prewarped at the cutoff is used (β = 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TmtfFilter {
    pub gain: f64,
    pub zero: f64,
    pub pole: f64,
}

impl TmtfFilter {
    pub fn design(params: &TmtfParams, frame_rate_hz: f64) -> Result<Self> {
        if !(frame_rate_hz > 2.0 * params.f_cutoff_hz) {
            return invalid(format!(
                "envelope rate {frame_rate_hz} Hz must exceed twice the TMTF cutoff {:.3} Hz",
                params.f_cutoff_hz
            ));
        }
        let w1 = 2.0 * PI * params.f_cutoff_hz / frame_rate_hz;
        if 2.0 * params.f_cutoff_hz < 0.45 * frame_rate_hz {
            if let Some(f) = Self::two_point(w1) {
                return Ok(f);
            }
        }
        Ok(Self::bilinear(w1))
    }

    fn bilinear(w_cut: f64) -> Self {
        let k = (w_cut / 2.0).tan();
        let pole = (1.0 - k) / (1.0 + k);
        Self {
            gain: k / (1.0 + k),
            zero: 1.0,
            pole,
        }
    }

    fn two_point(w1: f64) -> Option<Self> {
        let (g1, g2) = (0.5, 0.2);
        let u1 = 1.0 - w1.cos();
        let u2 = 1.0 - (2.0 * w1).cos();
        // p u + G q u = 1 - G at both anchor points.
        let det = u1 * g2 * u2 - g1 * u1 * u2;
        let p = ((1.0 - g1) * g2 * u2 - g1 * u1 * (1.0 - g2)) / det;
        let q = (u1 * (1.0 - g2) - u2 * (1.0 - g1)) / det;
        if !(q > 0.0) || p > 0.5 || !p.is_finite() {
            return None;
        }
        let zero = if p.abs() < 1e-12 {
            p / 2.0
        } else {
            let b = 2.0 - 2.0 * p;
            (b - (b * b - 4.0 * p * p).sqrt()) / (2.0 * p)
        };
        let b = 2.0 * q + 2.0;
        let pole = (b - (b * b - 4.0 * q * q).sqrt()) / (2.0 * q);
        if !(0.0..1.0).contains(&pole) || pole + zero < 0.0 {
            return None;
        }
        Some(Self {
            gain: (1.0 - pole) / (1.0 + zero),
            zero,
            pole,
        })
    }

    /// Filters one channel with state initialized to the first sample.
    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        let Some(&first) = x.first() else {
            return Vec::new();
        };
        let (mut x1, mut y1) = (first, first);
        x.iter()
            .map(|&v| {
                let y = self.gain * (v + self.zero * x1) + self.pole * y1;
                x1 = v;
                y1 = y;
                y
            })
            .collect()
    }

    /// Magnitude response at `f_hz` for sampling rate `rate_hz`.
    pub fn magnitude(&self, f_hz: f64, rate_hz: f64) -> f64 {
        let w = 2.0 * PI * f_hz / rate_hz;
        let num = (1.0 + self.zero * self.zero + 2.0 * self.zero * w.cos()).sqrt();
        let den = (1.0 + self.pole * self.pole - 2.0 * self.pole * w.cos()).sqrt();
        self.gain * num / den
    }
}

/// Low-pass filters every channel of `envelope` with the TMTF.
pub fn tmtf_filter(envelope: &CochleagramEnvelope, params: &TmtfParams) -> Result<CochleagramEnvelope> {
    let filter = TmtfFilter::design(params, envelope.frame_rate_hz)?;
    let rows: Vec<Vec<f64>> = (0..envelope.n_channels)
        .into_par_iter()
        .map(|c| {
            filter
                .run(envelope.channel(c))
                .into_iter()
                .map(|v| v.max(0.0))
                .collect()
        })
        .collect();
    let mut out = envelope.clone();
    out.data = rows.concat();
    Ok(out)
}

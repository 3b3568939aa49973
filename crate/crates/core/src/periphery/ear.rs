//! Fixed, audiogram-independent linear stages: inverse equal-loudness
//! correction and the free-field-to-cochlea (outer + middle ear) transfer.
//!
//! Each stage is a tabulated third-octave gain curve realized as an odd-length
//! linear-phase FIR by frequency sampling and applied with zero group delay.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Deserialize;
use std::sync::OnceLock;

use crate::dsp::convolve_same;
use crate::error::invalid;
use crate::Result;

const ELC_CSV: &str = include_str!("../../data/elc_60phon_v1.csv");
const OUTER_MIDDLE_EAR_CSV: &str = include_str!("../../data/outer_middle_ear_v1.csv");

/// Inclusive sample-rate range accepted by the ear filters.
pub const SUPPORTED_SAMPLE_RATES_HZ: (f64, f64) = (16_000.0, 48_000.0);

/// FIR half-length in seconds.
const FIR_HALF_SPAN_S: f64 = 0.032;

/// A frequency-to-gain table. Gains are interpolated linearly against
/// log-frequency and held constant outside the tabulated range.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferCurve {
    pub freqs_hz: Vec<f64>,
    pub gains_db: Vec<f64>,
}

#[derive(Deserialize)]
struct CurveRow {
    freq_hz: f64,
    gain_db: f64,
}

impl TransferCurve {
    pub fn new(freqs_hz: Vec<f64>, gains_db: Vec<f64>) -> Result<Self> {
        if freqs_hz.len() != gains_db.len() || freqs_hz.is_empty() {
            return invalid("transfer curve needs matching, non-empty columns");
        }
        if freqs_hz.windows(2).any(|w| w[1] <= w[0]) || freqs_hz[0] <= 0.0 {
            return invalid("transfer curve frequencies must be positive and increasing");
        }
        if gains_db.iter().any(|g| !g.is_finite()) {
            return invalid("transfer curve gains must be finite");
        }
        Ok(Self { freqs_hz, gains_db })
    }

    /// Parses a CSV with header `freq_hz,gain_db`.
    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(s.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| crate::Error::Format(e.to_string()))?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["freq_hz", "gain_db"] {
            return invalid("transfer curve header must be `freq_hz,gain_db`");
        }
        let mut freqs = Vec::new();
        let mut gains = Vec::new();
        for row in reader.deserialize::<CurveRow>() {
            let row = row.map_err(|e| crate::Error::Format(e.to_string()))?;
            freqs.push(row.freq_hz);
            gains.push(row.gain_db);
        }
        Self::new(freqs, gains)
    }

    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        let f = &self.freqs_hz;
        let g = &self.gains_db;
        if freq_hz <= f[0] {
            return g[0];
        }
        if freq_hz >= f[f.len() - 1] {
            return g[g.len() - 1];
        }
        let hi = f.partition_point(|&x| x <= freq_hz);
        let lo = hi - 1;
        let u = (freq_hz.ln() - f[lo].ln()) / (f[hi].ln() - f[lo].ln());
        g[lo] + u * (g[hi] - g[lo])
    }

    pub fn inverted(&self) -> Self {
        Self {
            freqs_hz: self.freqs_hz.clone(),
            gains_db: self.gains_db.iter().map(|g| -g).collect(),
        }
    }
}

/// 60-phon equal-loudness contour relative to 1 kHz (level needed for equal
/// loudness, dB).
pub fn elc_curve() -> &'static TransferCurve {
    static CURVE: OnceLock<TransferCurve> = OnceLock::new();
    CURVE.get_or_init(|| TransferCurve::from_csv_str(ELC_CSV).expect("bundled ELC table"))
}

/// Combined free-field-to-eardrum and middle-ear gain.
pub fn outer_middle_ear_curve() -> &'static TransferCurve {
    static CURVE: OnceLock<TransferCurve> = OnceLock::new();
    CURVE.get_or_init(|| {
        TransferCurve::from_csv_str(OUTER_MIDDLE_EAR_CSV).expect("bundled outer/middle ear table")
    })
}

/// Zero-phase FIR whose DFT samples equal the curve's linear gain.
pub fn design_fir(curve: &TransferCurve, sample_rate_hz: f64) -> Vec<f64> {
    let half = (FIR_HALF_SPAN_S * sample_rate_hz).round() as usize;
    let n = 2 * half + 1;
    let mut spec: Vec<Complex64> = (0..n)
        .map(|k| {
            let bin = k.min(n - k);
            let f = bin as f64 * sample_rate_hz / n as f64;
            Complex64::new(10f64.powf(curve.gain_db_at(f) / 20.0), 0.0)
        })
        .collect();
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut spec);
    // Rotate so the zero-lag tap sits in the middle.
    (0..n)
        .map(|i| spec[(i + n - half) % n].re / n as f64)
        .collect()
}

fn check_signal(signal: &[f64], sample_rate_hz: f64) -> Result<()> {
    if signal.is_empty() {
        return invalid("empty signal");
    }
    if signal.iter().any(|x| !x.is_finite()) {
        return invalid("signal contains non-finite samples");
    }
    let (lo, hi) = SUPPORTED_SAMPLE_RATES_HZ;
    if !(lo..=hi).contains(&sample_rate_hz) {
        return invalid(format!("unsupported sample rate {sample_rate_hz} Hz"));
    }
    Ok(())
}

fn filter_with(curve: &TransferCurve, signal: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    check_signal(signal, sample_rate_hz)?;
    Ok(convolve_same(signal, &design_fir(curve, sample_rate_hz)))
}

pub fn apply_outer_middle_ear(signal: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    filter_with(outer_middle_ear_curve(), signal, sample_rate_hz)
}

/// Imposes the equal-loudness contour itself (the inverse of
/// [`apply_inverse_elc`]).
pub fn apply_elc(signal: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    filter_with(elc_curve(), signal, sample_rate_hz)
}

/// Attenuates each frequency by the level the contour says it needs for
/// equal loudness.
pub fn apply_inverse_elc(signal: &[f64], sample_rate_hz: f64) -> Result<Vec<f64>> {
    filter_with(&elc_curve().inverted(), signal, sample_rate_hz)
}

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::HearingLossLevel;
use crate::error::invalid;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

/// Pure-tone hearing thresholds for one ear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Audiogram {
    pub ear: Ear,
    pub frequencies_hz: Vec<f64>,
    pub thresholds_db_hl: Vec<f64>,
}

/// Frequencies averaged into the pure-tone average.
pub const PTA_FREQUENCIES_HZ: [f64; 4] = [500.0, 1000.0, 2000.0, 4000.0];

impl Audiogram {
    pub fn new(ear: Ear, frequencies_hz: Vec<f64>, thresholds_db_hl: Vec<f64>) -> Result<Self> {
        let a = Self {
            ear,
            frequencies_hz,
            thresholds_db_hl,
        };
        a.validate()?;
        Ok(a)
    }

    /// Flat audiogram over the standard audiometric frequencies.
    pub fn flat(ear: Ear, threshold_db_hl: f64) -> Result<Self> {
        let freqs = vec![250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];
        let n = freqs.len();
        Self::new(ear, freqs, vec![threshold_db_hl; n])
    }

    pub fn validate(&self) -> Result<()> {
        if self.frequencies_hz.len() != self.thresholds_db_hl.len() {
            return invalid(format!(
                "audiogram has {} frequencies but {} thresholds",
                self.frequencies_hz.len(),
                self.thresholds_db_hl.len()
            ));
        }
        if self.frequencies_hz.len() < 2 {
            return invalid("audiogram needs at least two points");
        }
        if self.frequencies_hz.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return invalid("audiogram frequencies must be positive and finite");
        }
        if self.frequencies_hz.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("audiogram frequencies must be strictly increasing");
        }
        if self
            .thresholds_db_hl
            .iter()
            .any(|t| !t.is_finite() || !(-10.0..=120.0).contains(t))
        {
            return invalid("audiogram thresholds must lie in [-10, 120] dB HL");
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let a: Audiogram = serde_json::from_str(s)?;
        a.validate()?;
        Ok(a)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Threshold at `freq_hz`, linearly interpolated on a log-frequency axis.
    /// Returns `None` outside the measured range.
    pub fn threshold_at(&self, freq_hz: f64) -> Option<f64> {
        let f = &self.frequencies_hz;
        let t = &self.thresholds_db_hl;
        if freq_hz < f[0] || freq_hz > f[f.len() - 1] {
            return None;
        }
        if let Some(i) = f.iter().position(|&x| x == freq_hz) {
            return Some(t[i]);
        }
        let hi = f.iter().position(|&x| x > freq_hz)?;
        let lo = hi - 1;
        let u = (freq_hz.ln() - f[lo].ln()) / (f[hi].ln() - f[lo].ln());
        Some(t[lo] + u * (t[hi] - t[lo]))
    }
}

/// Mean threshold over 500, 1000, 2000 and 4000 Hz.
pub fn pure_tone_average(audiogram: &Audiogram) -> Result<f64> {
    audiogram.validate()?;
    let mut sum = 0.0;
    for f in PTA_FREQUENCIES_HZ {
        match audiogram.threshold_at(f) {
            Some(t) => sum += t,
            None => return invalid(format!("audiogram does not cover {f} Hz")),
        }
    }
    Ok(sum / PTA_FREQUENCIES_HZ.len() as f64)
}

/// Grades an audiogram by its pure-tone average.
///
/// Bins: `<= 20` normal, `(20, 35]` mild, `(35, 55]` moderate, `> 55` severe
/// (dB HL). A PTA exactly on a boundary takes the milder grade.
pub fn classify_severity(audiogram: &Audiogram) -> Result<HearingLossLevel> {
    let pta = pure_tone_average(audiogram)?;
    Ok(if pta <= 20.0 {
        HearingLossLevel::NormalHearing
    } else if pta <= 35.0 {
        HearingLossLevel::MildLoss
    } else if pta <= 55.0 {
        HearingLossLevel::ModerateLoss
    } else {
        HearingLossLevel::SevereLoss
    })
}

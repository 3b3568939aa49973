//! Per-modulation-channel similarity between clean and degraded STM tensors.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::invalid;
use crate::stm::StmTensor;
use crate::Result;

/// Pearson correlation, or `Degenerate` when either input has (numerically)
/// zero variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Correlation {
    Value(f64),
    Degenerate,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Correlation::Value(v) => Some(v),
            Correlation::Degenerate => None,
        }
    }
}

/// How zero-variance channels enter the matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    #[default]
    AsZero,
    AsMissing,
}

/// Sum over cochlear channels for modulation channel `(s, t)`.
pub fn frequency_aggregate(stm: &StmTensor, s: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; stm.n_frames];
    let slice = stm.slice(s, t);
    for row in slice.chunks_exact(stm.n_frames) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

fn centered_sum_squares(x: &[f64]) -> (Vec<f64>, f64, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss = centered.iter().map(|v| v * v).sum::<f64>();
    let eps = 1e-12 * x.len() as f64 * x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (centered, ss, eps)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return invalid(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    if x.len() < 2 {
        return invalid("correlation needs at least two samples");
    }
    let (xc, sxx, xe) = centered_sum_squares(x);
    let (yc, syy, ye) = centered_sum_squares(y);
    if sxx.sqrt() <= xe || syy.sqrt() <= ye {
        return Ok(Correlation::Degenerate);
    }
    let dot: f64 = xc.iter().zip(&yc).map(|(a, b)| a * b).sum();
    Ok(Correlation::Value((dot / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// `N_S x N_T` correlation matrix; `None` marks a missing (degenerate) entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NccMatrix {
    pub data: Vec<Option<f64>>,
    pub n_s: usize,
    pub n_t: usize,
    pub spectral_centers: Vec<f64>,
    pub temporal_centers: Vec<f64>,
}

impl NccMatrix {
    pub fn get(&self, s: usize, t: usize) -> Option<f64> {
        self.data[s * self.n_t + t]
    }

    /// Entries with missing values replaced by `fill`.
    pub fn to_dense(&self, fill: f64) -> Vec<f64> {
        self.data.iter().map(|v| v.unwrap_or(fill)).collect()
    }

    /// Mean of the defined entries.
    pub fn summary(&self) -> Option<f64> {
        let vals: Vec<f64> = self.data.iter().flatten().copied().collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    /// Places the matrix into a fixed `rows x cols` grid, row-major.
    ///
    /// Band-pass channel `i` on either axis (the `i`-th step down the
    /// center-frequency ladder) goes to grid index `i`. The DC channel goes to
    /// the last grid index. Unused cells and missing entries are 0.
    pub fn to_fixed_grid(&self, rows: usize, cols: usize) -> Result<Vec<f64>> {
        if self.n_s > rows || self.n_t > cols {
            return invalid(format!(
                "NCC matrix {}x{} does not fit a {rows}x{cols} grid",
                self.n_s, self.n_t
            ));
        }
        let place = |i: usize, n: usize, slots: usize| if i + 1 == n { slots - 1 } else { i };
        let mut grid = vec![0.0; rows * cols];
        for s in 0..self.n_s {
            for t in 0..self.n_t {
                let (r, c) = (place(s, self.n_s, rows), place(t, self.n_t, cols));
                grid[r * cols + c] = self.get(s, t).unwrap_or(0.0);
            }
        }
        Ok(grid)
    }

    /// CSV with one row per spectral channel, 9 significant digits,
    /// missing entries written as `NaN`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for s in 0..self.n_s {
            let row: Vec<String> = (0..self.n_t)
                .map(|t| match self.get(s, t) {
                    Some(v) => format_significant(v, 9),
                    None => "NaN".to_string(),
                })
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

/// Formats `v` with `digits` significant digits, without an exponent for
/// moderate magnitudes.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    if (-5..digits as i32).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.prec$e}", prec = digits - 1)
    }
}

/// Pearson correlation of clean and degraded frequency-aggregated
/// trajectories for every modulation channel.
pub fn ncc_matrix(clean: &StmTensor, spin: &StmTensor, policy: DegeneratePolicy) -> Result<NccMatrix> {
    if clean.shape() != spin.shape() {
        return invalid(format!(
            "STM shapes differ: {:?} vs {:?}",
            clean.shape(),
            spin.shape()
        ));
    }
    let mut data = Vec::with_capacity(clean.n_s * clean.n_t);
    for s in 0..clean.n_s {
        for t in 0..clean.n_t {
            let x = frequency_aggregate(clean, s, t);
            let y = frequency_aggregate(spin, s, t);
            data.push(match pearson(&x, &y)? {
                Correlation::Value(v) => Some(v),
                Correlation::Degenerate => match policy {
                    DegeneratePolicy::AsZero => Some(0.0),
                    DegeneratePolicy::AsMissing => None,
                },
            });
        }
    }
    Ok(NccMatrix {
        data,
        n_s: clean.n_s,
        n_t: clean.n_t,
        spectral_centers: clean.spectral_centers.clone(),
        temporal_centers: clean.temporal_centers.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), Correlation::Value(1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), Correlation::Value(-1.0));
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]).unwrap(), Correlation::Degenerate);
        assert_eq!(pearson(&[0.1; 5], &[0.0, 1.0, 0.0, 1.0, 0.0]).unwrap(), Correlation::Degenerate);
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn aggregate_single_channel() {
        let mut t = StmTensor::zeros(1, 1, 1, 4);
        t.data = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(frequency_aggregate(&t, 0, 0), vec![1.0, 2.0, 3.0, 4.0]);
        let z = StmTensor::zeros(2, 2, 3, 4);
        assert_eq!(frequency_aggregate(&z, 1, 1), vec![0.0; 4]);
    }

    #[test]
    fn degenerate_policy() {
        let a = StmTensor::zeros(1, 2, 2, 3);
        let m = ncc_matrix(&a, &a, DegeneratePolicy::AsZero).unwrap();
        assert_eq!(m.data, vec![Some(0.0), Some(0.0)]);
        let m = ncc_matrix(&a, &a, DegeneratePolicy::AsMissing).unwrap();
        assert_eq!(m.data, vec![None, None]);
        assert_eq!(m.summary(), None);
        assert_eq!(m.to_csv(), "NaN,NaN\n");
    }

    #[test]
    fn shape_mismatch() {
        let a = StmTensor::zeros(1, 2, 2, 3);
        let b = StmTensor::zeros(1, 2, 2, 4);
        assert!(ncc_matrix(&a, &b, DegeneratePolicy::AsZero).is_err());
    }

    #[test]
    fn fixed_grid_aligns_dc_last() {
        let m = NccMatrix {
            data: vec![Some(0.1), Some(0.2), Some(0.3), Some(0.4)],
            n_s: 2,
            n_t: 2,
            spectral_centers: vec![1.0, 0.0],
            temporal_centers: vec![1.0, 0.0],
        };
        let g = m.to_fixed_grid(3, 3).unwrap();
        assert_eq!(g, vec![0.1, 0.0, 0.2, 0.0, 0.0, 0.0, 0.3, 0.0, 0.4]);
        assert!(m.to_fixed_grid(1, 3).is_err());
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_significant(1.0, 9), "1");
        assert_eq!(format_significant(-0.123456789123, 9), "-0.123456789");
        assert_eq!(format_significant(0.5, 9), "0.5");
        assert_eq!(format_significant(1.5e-7, 9), "1.50000000e-7");
    }
}

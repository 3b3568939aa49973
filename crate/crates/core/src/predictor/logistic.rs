use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::{Error, Result};

/// Slope `a` and midpoint `b` of `1 / (1 + exp(-a (x - b)))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub a: f64,
    pub b: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self { a: 4.0, b: 0.5 }
    }
}

pub fn logistic_map(x: f64, params: &LogisticParams) -> f64 {
    1.0 / (1.0 + (-params.a * (x - params.b)).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    pub mse: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the optimum drives the slope to zero (flat targets).
    pub slope_vanished: bool,
}

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-10;

fn mse(pairs: &[(f64, f64)], p: &LogisticParams) -> f64 {
    pairs
        .iter()
        .map(|&(x, y)| (logistic_map(x, p) - y).powi(2))
        .sum::<f64>()
        / pairs.len() as f64
}

/// Least-squares fit of `(summary, target)` pairs by damped Gauss-Newton
/// (Levenberg-Marquardt), starting from `a = 4`, `b = median(summary)`.
pub fn fit_logistic(pairs: &[(f64, f64)]) -> Result<LogisticFit> {
    if pairs.len() < 3 {
        return invalid(format!("logistic fit needs at least 3 pairs, got {}", pairs.len()));
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return invalid("logistic fit inputs must be finite");
    }
    let (lo, hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (x, _)| (l.min(*x), h.max(*x)));
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return Err(Error::DegenerateFit("summary values are constant".into()));
    }
    let mut xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    let median = if xs.len() % 2 == 1 {
        xs[xs.len() / 2]
    } else {
        0.5 * (xs[xs.len() / 2 - 1] + xs[xs.len() / 2])
    };

    let mut p = LogisticParams { a: 4.0, b: median };
    let mut loss = mse(pairs, &p);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        // Normal equations J^T J and gradient J^T r.
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, y) in pairs {
            let yh = logistic_map(x, &p);
            let d = yh * (1.0 - yh);
            let da = d * (x - p.b);
            let db = -p.a * d;
            let r = yh - y;
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let (m11, m22) = (jaa * (1.0 + lambda) + lambda * 1e-12, jbb * (1.0 + lambda) + lambda * 1e-12);
            let det = m11 * m22 - jab * jab;
            if det.abs() < f64::MIN_POSITIVE {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let trial = LogisticParams {
                a: p.a + step_a,
                b: p.b + step_b,
            };
            let trial_loss = mse(pairs, &trial);
            if trial_loss.is_finite() && trial_loss <= loss {
                let step_norm = step_a.hypot(step_b);
                p = trial;
                loss = trial_loss;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if step_norm < STEP_TOLERANCE {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged || loss == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(LogisticFit {
        params: p,
        mse: loss,
        iterations,
        converged,
        slope_vanished: p.a.abs() < 1e-3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn map_closed_forms() {
        let p = LogisticParams { a: 1.0, b: 0.0 };
        assert_eq!(logistic_map(0.0, &p), 0.5);
        assert!((logistic_map(3f64.ln(), &p) - 0.75).abs() < 1e-15);
        let q = LogisticParams { a: 7.0, b: 0.3 };
        assert_eq!(logistic_map(0.3, &q), 0.5);
        assert!(logistic_map(0.2, &q) < logistic_map(0.25, &q));
    }

    #[test]
    fn exact_recovery_without_noise() {
        let truth = LogisticParams { a: 3.0, b: 0.5 };
        let pairs: Vec<_> = (0..40)
            .map(|i| {
                let x = -1.0 + 3.0 * i as f64 / 39.0;
                (x, logistic_map(x, &truth))
            })
            .collect();
        let fit = fit_logistic(&pairs).unwrap();
        assert!((fit.params.a - 3.0).abs() < 1e-6, "{:?}", fit);
        assert!((fit.params.b - 0.5).abs() < 1e-6, "{:?}", fit);
        assert!(fit.converged);
    }

    #[test]
    fn flat_targets_flag_vanishing_slope() {
        let pairs: Vec<_> = (0..20).map(|i| (i as f64 / 19.0, 0.5)).collect();
        let fit = fit_logistic(&pairs).unwrap();
        let mean = pairs.iter().map(|p| p.0).sum::<f64>() / 20.0;
        assert!((logistic_map(mean, &fit.params) - 0.5).abs() < 1e-6);
        assert!(fit.slope_vanished, "{:?}", fit);
    }

    #[test]
    fn noisy_recovery() {
        let truth = LogisticParams { a: 5.0, b: 0.3 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let pairs: Vec<_> = (0..200)
            .map(|i| {
                let x = -0.5 + 1.6 * i as f64 / 199.0;
                (x, logistic_map(x, &truth) + noise.sample(&mut rng))
            })
            .collect();
        let fit = fit_logistic(&pairs).unwrap();
        assert!((fit.params.a / 5.0 - 1.0).abs() < 0.05);
        assert!((fit.params.b / 0.3 - 1.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_logistic(&[(0.4, 0.1), (0.4, 0.5), (0.4, 0.9)]),
            Err(Error::DegenerateFit(_))
        ));
        assert!(matches!(fit_logistic(&[(0.1, 0.1), (0.4, 0.5)]), Err(Error::InvalidInput(_))));
    }
}

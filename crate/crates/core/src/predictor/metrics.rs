use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::similarity::{pearson, Correlation};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub rmse: f64,
    pub rho: Correlation,
    pub n: usize,
}

/// RMSE and Pearson correlation of `[0, 1]` predictions against `[0, 100]`
/// targets. Predictions are scaled by 100 first.
pub fn evaluate(predictions: &[f64], targets: &[f64]) -> Result<Evaluation> {
    if predictions.len() != targets.len() {
        return invalid(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        ));
    }
    if predictions.len() < 2 {
        return invalid("evaluation needs at least two predictions");
    }
    let scaled: Vec<f64> = predictions.iter().map(|p| p * 100.0).collect();
    let mse = scaled
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / scaled.len() as f64;
    Ok(Evaluation {
        rmse: mse.sqrt(),
        rho: pearson(&scaled, targets)?,
        n: scaled.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let t = [10.0, 40.0, 95.0];
        let p: Vec<f64> = t.iter().map(|v| v / 100.0).collect();
        let e = evaluate(&p, &t).unwrap();
        assert!(e.rmse < 1e-12);
        assert!((e.rho.value().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_offset() {
        let e = evaluate(&[0.2, 0.4], &[30.0, 50.0]).unwrap();
        assert!((e.rmse - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictions_are_degenerate() {
        let e = evaluate(&[0.5, 0.5, 0.5], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.rho, Correlation::Degenerate);
    }

    #[test]
    fn errors() {
        assert!(evaluate(&[0.1], &[1.0, 2.0]).is_err());
        assert!(evaluate(&[0.1], &[1.0]).is_err());
    }
}

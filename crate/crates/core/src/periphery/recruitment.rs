use super::{CochleagramEnvelope, HearingLossLevel};
use crate::error::invalid;
use crate::Result;

/// Envelope value of a full-scale tone at its channel's center frequency;
/// treated as 100 dB SPL.
pub const FULL_SCALE_REFERENCE: f64 = 1.0;

/// Power-law expansion `reference * (e / reference)^p`.
#[inline]
pub fn recruit(e: f64, reference: f64, exponent: f64) -> f64 {
    if exponent == 1.0 {
        return e;
    }
    reference * (e / reference).powf(exponent)
}

/// Applies the level's expansive envelope nonlinearity to every sample.
pub fn apply_recruitment(
    envelope: &CochleagramEnvelope,
    level: HearingLossLevel,
    reference: f64,
) -> Result<CochleagramEnvelope> {
    if !(reference > 0.0) || !reference.is_finite() {
        return invalid(format!("recruitment reference must be positive, got {reference}"));
    }
    let p = level.recruitment().exponent();
    let mut out = envelope.clone();
    for v in out.data.iter_mut() {
        *v = recruit(*v, reference, p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env(data: Vec<f64>) -> CochleagramEnvelope {
        let f = data.len();
        CochleagramEnvelope::new(data, 1, f, 100.0, vec![1000.0]).unwrap()
    }

    #[test]
    fn none_is_identity() {
        let e = env(vec![0.0, 0.1, 0.5, 1.0, 2.0]);
        let out = apply_recruitment(&e, HearingLossLevel::NormalHearing, 1.0).unwrap();
        assert_eq!(out.data, e.data);
    }

    #[test]
    fn reference_is_fixed_point() {
        for level in HearingLossLevel::ALL {
            let out = apply_recruitment(&env(vec![0.7]), level, 0.7).unwrap();
            assert!((out.data[0] - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn square_law_arithmetic() {
        assert!((recruit(0.25, 1.0, 2.0) - 1.0 / 16.0).abs() < 1e-15);
        assert!((recruit(2.5, 10.0, 2.0) - 10.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn non_positive_reference_rejected() {
        assert!(apply_recruitment(&env(vec![1.0]), HearingLossLevel::MildLoss, 0.0).is_err());
        assert!(apply_recruitment(&env(vec![1.0]), HearingLossLevel::MildLoss, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn preserves_order(a in 0.0f64..5.0, b in 0.0f64..5.0, lvl in 0usize..4) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = HearingLossLevel::from_index(lvl).unwrap().recruitment().exponent();
            prop_assert!(recruit(lo, 1.0, p) <= recruit(hi, 1.0, p));
        }
    }
}

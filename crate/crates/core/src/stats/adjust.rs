use serde::Serialize;

use super::permutation::Measure;
use crate::error::{Error, Result};

/// A reliability-adjusted score in `[0, 1]`. For r the magnitude is adjusted
/// and the sign of the raw correlation is kept alongside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AdjustedScore {
    pub value: f64,
    pub negative: bool,
}

/// Divides a model-vs-human score by the human-vs-human reliability, capped at 1.
///
/// For r this is `sqrt(r^2 / reliability^2)`; for order consistency it is
/// `oc / reliability`.
pub fn adjust_upper_bound(value: f64, reliability: f64, kind: Measure) -> Result<AdjustedScore> {
    if !(reliability > 0.0) {
        return Err(Error::invalid(format!(
            "reliability must be positive, got {reliability}"
        )));
    }
    if !value.is_finite() {
        return Err(Error::invalid("non-finite score"));
    }
    let adjusted = match kind {
        Measure::R => (value * value / (reliability * reliability)).sqrt(),
        Measure::Ocp => value / reliability,
    };
    Ok(AdjustedScore {
        value: adjusted.clamp(0.0, 1.0),
        negative: value < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reported_medians() {
        let r = adjust_upper_bound(0.47, 0.76, Measure::R).unwrap();
        assert!((r.value - 0.6184).abs() < 1e-4);
        let oc = adjust_upper_bound(0.65, 0.73, Measure::Ocp).unwrap();
        assert!((oc.value - 0.890).abs() < 1e-3);
    }

    #[test]
    fn capped_and_sign() {
        assert_eq!(adjust_upper_bound(0.9, 0.8, Measure::R).unwrap().value, 1.0);
        let neg = adjust_upper_bound(-0.3, 0.6, Measure::R).unwrap();
        assert!(neg.negative);
        assert_eq!(neg.value, adjust_upper_bound(0.3, 0.6, Measure::R).unwrap().value);
        assert!(adjust_upper_bound(0.3, 0.0, Measure::R).is_err());
        assert!(adjust_upper_bound(0.3, -0.2, Measure::Ocp).is_err());
    }
}

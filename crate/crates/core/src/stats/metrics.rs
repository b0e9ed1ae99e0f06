use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(Error::invalid(format!(
            "correlation needs at least 3 values, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("correlation of a constant vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn sign(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Order-consistency credit in half units: 2 per concordant pair, 1 per pair
/// tied in either list, 0 per discordant pair.
pub fn oc_half_credits(x: &[f64], y: &[f64]) -> u64 {
    let n = x.len();
    let mut credit = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let sx = sign(x[i], x[j]);
            let sy = sign(y[i], y[j]);
            credit += if sx == Ordering::Equal || sy == Ordering::Equal {
                1
            } else if sx == sy {
                2
            } else {
                0
            };
        }
    }
    credit
}

/// Pairwise order consistency: fraction of item pairs ordered the same way
/// in both lists, tied pairs counting one half.
pub fn pairwise_oc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("order consistency needs at least 2 items"));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok(oc_half_credits(x, y) as f64 / (2.0 * pairs))
}

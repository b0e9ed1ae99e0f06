//! False discovery rate control.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FdrResult {
    /// Adjusted p-values in input order, capped at 1.
    pub adjusted: Vec<f64>,
    pub reject: Vec<bool>,
}

fn check(pvals: &[f64], q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("FDR level {q} outside (0, 1)")));
    }
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    Ok(())
}

/// Step-up procedure with per-rank factor `m * scale / rank`.
fn step_up(pvals: &[f64], q: f64, scale: f64) -> FdrResult {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));

    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        let raw = pvals[i] * m as f64 * scale / rank as f64;
        running = running.min(raw).min(1.0);
        adjusted[i] = running;
    }

    let mut largest = 0;
    for rank in 1..=m {
        let threshold = rank as f64 / m as f64 * q / scale;
        if pvals[order[rank - 1]] <= threshold {
            largest = rank;
        }
    }
    let mut reject = vec![false; m];
    for &i in &order[..largest] {
        reject[i] = true;
    }
    FdrResult { adjusted, reject }
}

/// Benjamini-Yekutieli correction, valid under arbitrary dependence.
///
/// With `c(m) = 1 + 1/2 + ... + 1/m`, rejects every test up to the largest rank
/// `i` with `p(i) <= i / m * q / c(m)`.
pub fn fdr_by(pvals: &[f64], q: f64) -> Result<FdrResult> {
    check(pvals, q)?;
    let c: f64 = (1..=pvals.len()).map(|i| 1.0 / i as f64).sum();
    Ok(step_up(pvals, q, c))
}

/// Benjamini-Hochberg correction.
pub fn fdr_bh(pvals: &[f64], q: f64) -> Result<FdrResult> {
    check(pvals, q)?;
    Ok(step_up(pvals, q, 1.0))
}

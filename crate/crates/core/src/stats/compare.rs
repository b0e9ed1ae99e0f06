//! Paired comparison of two scoring schemes across experiments.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::describe::{mean, median, sample_sd};
use super::permutation::{stream_rng, PermutationConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct SchemeComparison {
    pub n: usize,
    pub median_a: f64,
    pub median_b: f64,
    pub mean_difference: f64,
    /// Mean paired difference over its sample SD.
    pub cohen_d: f64,
    /// One-sided sign-flip permutation p for `a > b`.
    pub p: f64,
    pub exhaustive: bool,
}

/// Compares per-experiment scores of scheme `a` against scheme `b`.
pub fn compare_schemes(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
    cfg: &PermutationConfig,
) -> Result<SchemeComparison> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::invalid("scheme comparison needs identical experiment keys"));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("scheme comparison needs at least 2 experiments"));
    }
    if cfg.n_perm < 1 {
        return Err(Error::invalid("number of permutations must be at least 1"));
    }
    let va: Vec<f64> = a.values().copied().collect();
    let vb: Vec<f64> = b.values().copied().collect();
    let d: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| x - y).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite score in scheme comparison"));
    }

    let md = mean(&d);
    let sd = sample_sd(&d);
    let cohen_d = if sd > 0.0 {
        md / sd
    } else if md == 0.0 {
        0.0
    } else {
        md.signum() * f64::INFINITY
    };

    let observed: f64 = d.iter().sum();
    let tol = 1e-12 * d.iter().map(|x| x.abs()).sum::<f64>();
    let flipped_sum = |signs: u64| -> f64 {
        d.iter()
            .enumerate()
            .map(|(i, x)| if signs >> i & 1 == 1 { -x } else { *x })
            .sum()
    };

    let exhaustive = n < 64 && (1u64 << n) <= cfg.exhaustive_limit;
    let (hits, total) = if exhaustive {
        let total = 1u64 << n;
        let hits = (0..total)
            .into_par_iter()
            .filter(|&s| flipped_sum(s) >= observed - tol)
            .count();
        (hits, total as usize)
    } else {
        let hits = (0..cfg.n_perm)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = stream_rng(cfg.seed, i as u64);
                let s: f64 = d
                    .iter()
                    .map(|x| if rng.random::<bool>() { -x } else { *x })
                    .sum();
                s >= observed - tol
            })
            .count();
        (hits, cfg.n_perm)
    };

    Ok(SchemeComparison {
        n,
        median_a: median(&va),
        median_b: median(&vb),
        mean_difference: md,
        cohen_d,
        p: hits as f64 / total as f64,
        exhaustive,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> BTreeMap<String, f64> {
        v.iter()
            .enumerate()
            .map(|(i, x)| (format!("e{i:02}"), *x))
            .collect()
    }

    #[test]
    fn identical_columns() {
        let a = map(&[0.1, 0.5, 0.3, 0.9]);
        let c = compare_schemes(&a, &a, &PermutationConfig::default()).unwrap();
        assert_eq!(c.cohen_d, 0.0);
        assert!(c.p >= 0.5);
    }

    #[test]
    fn all_positive_differences_exhaustive() {
        // Only the identity sign assignment reaches the observed sum.
        let a = map(&[0.5, 0.7, 0.2, 0.9, 0.4, 0.6]);
        let b = map(&[0.1, 0.2, 0.1, 0.3, 0.35, 0.0]);
        let c = compare_schemes(&a, &b, &PermutationConfig::default()).unwrap();
        assert!(c.exhaustive);
        assert_eq!(c.p, 1.0 / 64.0);
        assert!(c.cohen_d > 0.0);
        assert_eq!(c.median_a, 0.55);
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let a = map(&(0..30).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>());
        let b = map(&(0..30).map(|i| (i as f64 * 0.11).cos() * 0.5).collect::<Vec<_>>());
        let cfg = PermutationConfig {
            n_perm: 2000,
            seed: 5,
            exhaustive_limit: 1000,
        };
        let x = compare_schemes(&a, &b, &cfg).unwrap();
        let y = compare_schemes(&a, &b, &cfg).unwrap();
        assert!(!x.exhaustive);
        assert_eq!(x.p, y.p);
    }

    #[test]
    fn key_mismatch() {
        let a = map(&[1.0, 2.0]);
        let mut b = map(&[1.0, 2.0]);
        b.insert("zz".into(), 0.0);
        assert!(compare_schemes(&a, &b, &PermutationConfig::default()).is_err());
    }
}

//! Label-permutation null distributions.
//!
//! Model scores are permuted against fixed human scores. Small problems are
//! enumerated exhaustively; larger ones draw `n_perm` uniform permutations.
//! Iteration `i` draws from its own ChaCha stream `(seed, i)`, so the null
//! is identical for any thread count.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use super::describe::{mean, sample_sd};
use super::metrics::{oc_half_credits, pairwise_oc, pearson_r};
use crate::error::{Error, Result};

pub const DEFAULT_PERMUTATIONS: usize = 10_000;
/// 8! permutations.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u64 = 40_320;

const BLOCK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Measure {
    #[serde(rename = "r")]
    R,
    #[serde(rename = "oc_p")]
    Ocp,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::R => "r",
            Measure::Ocp => "oc_p",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PermutationConfig {
    pub n_perm: usize,
    pub seed: u64,
    /// Enumerate every permutation when n! does not exceed this.
    pub exhaustive_limit: u64,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            n_perm: DEFAULT_PERMUTATIONS,
            seed: 0,
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NullDistribution {
    pub measure: Measure,
    #[serde(skip)]
    pub samples: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub n_permutations: usize,
    pub seed: u64,
    pub exhaustive: bool,
    /// Null values at or above the observed value (order consistency only).
    pub exceed_count: Option<usize>,
}

impl NullDistribution {
    pub fn quantile(&self, q: f64) -> f64 {
        super::describe::quantile(&self.samples, q)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PermutationOutcome {
    pub observed: f64,
    pub p: f64,
    pub null: NullDistribution,
}

/// The ChaCha stream used for iteration `index` under `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn factorial_at_most(n: usize, limit: u64) -> Option<u64> {
    let mut f: u64 = 1;
    for k in 2..=n as u64 {
        f = f.checked_mul(k)?;
        if f > limit {
            return None;
        }
    }
    (f <= limit).then_some(f)
}

/// Advances `perm` to the next permutation in lexicographic order.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Per-permutation statistics: r computed from unit-normalized centered
/// vectors, order consistency as integer half credits.
struct Kernel<'a> {
    model: &'a [f64],
    model_unit: Vec<f64>,
    human_unit: Vec<f64>,
    human: &'a [f64],
    want_r: bool,
}

impl<'a> Kernel<'a> {
    fn new(model: &'a [f64], human: &'a [f64], want_r: bool) -> Self {
        let unit = |v: &[f64]| {
            let m = mean(v);
            let c: Vec<f64> = v.iter().map(|x| x - m).collect();
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            c.into_iter().map(|x| x / norm).collect::<Vec<_>>()
        };
        Kernel {
            model,
            model_unit: if want_r { unit(model) } else { Vec::new() },
            human_unit: if want_r { unit(human) } else { Vec::new() },
            human,
            want_r,
        }
    }

    fn eval(&self, perm: &[usize], scratch: &mut Vec<f64>) -> (f64, u64) {
        let r = if self.want_r {
            perm.iter()
                .zip(&self.human_unit)
                .map(|(&p, h)| self.model_unit[p] * h)
                .sum::<f64>()
                .clamp(-1.0, 1.0)
        } else {
            f64::NAN
        };
        scratch.clear();
        scratch.extend(perm.iter().map(|&p| self.model[p]));
        (r, oc_half_credits(scratch, self.human))
    }
}

fn validate(model: &[f64], human: &[f64], cfg: &PermutationConfig) -> Result<()> {
    if model.len() != human.len() {
        return Err(Error::LengthMismatch(model.len(), human.len()));
    }
    if cfg.n_perm < 1 {
        return Err(Error::invalid("number of permutations must be at least 1"));
    }
    if model.iter().chain(human).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite score in permutation test"));
    }
    Ok(())
}

/// Null samples as (r, half credits) in iteration order.
fn null_samples(
    model: &[f64],
    human: &[f64],
    cfg: &PermutationConfig,
    want_r: bool,
) -> (Vec<(f64, u64)>, bool) {
    let n = model.len();
    let kernel = Kernel::new(model, human, want_r);
    if factorial_at_most(n, cfg.exhaustive_limit).is_some() {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut scratch = Vec::with_capacity(n);
        let mut out = Vec::new();
        loop {
            out.push(kernel.eval(&perm, &mut scratch));
            if !next_permutation(&mut perm) {
                break;
            }
        }
        return (out, true);
    }

    let blocks = cfg.n_perm.div_ceil(BLOCK);
    let out = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(cfg.n_perm);
            let mut perm: Vec<usize> = Vec::with_capacity(n);
            let mut scratch = Vec::with_capacity(n);
            let kernel = &kernel;
            (start..end)
                .map(|i| {
                    let mut rng = stream_rng(cfg.seed, i as u64);
                    perm.clear();
                    perm.extend(0..n);
                    perm.shuffle(&mut rng);
                    kernel.eval(&perm, &mut scratch)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    (out, false)
}

fn gaussian_upper_tail(x: f64, mu: f64, sigma: f64) -> f64 {
    0.5 * erfc((x - mu) / (sigma * std::f64::consts::SQRT_2))
}

fn r_outcome(observed: f64, samples: Vec<f64>, cfg: &PermutationConfig, exhaustive: bool) -> Result<PermutationOutcome> {
    let mu = mean(&samples);
    let sd = sample_sd(&samples);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance("correlation null distribution".into()));
    }
    Ok(PermutationOutcome {
        observed,
        p: gaussian_upper_tail(observed, mu, sd),
        null: NullDistribution {
            measure: Measure::R,
            n_permutations: samples.len(),
            samples,
            mean: mu,
            sd,
            seed: cfg.seed,
            exhaustive,
            exceed_count: None,
        },
    })
}

fn ocp_outcome(
    observed_half: u64,
    pairs: u64,
    halves: &[u64],
    cfg: &PermutationConfig,
    exhaustive: bool,
) -> PermutationOutcome {
    let denom = (2 * pairs) as f64;
    let samples: Vec<f64> = halves.iter().map(|&h| h as f64 / denom).collect();
    let exceed = halves.iter().filter(|&&h| h >= observed_half).count();
    PermutationOutcome {
        observed: observed_half as f64 / denom,
        p: exceed as f64 / halves.len() as f64,
        null: NullDistribution {
            measure: Measure::Ocp,
            n_permutations: halves.len(),
            mean: mean(&samples),
            sd: sample_sd(&samples),
            samples,
            seed: cfg.seed,
            exhaustive,
            exceed_count: Some(exceed),
        },
    }
}

/// Significance of one agreement measure between model and human scores.
///
/// For r the null is summarized by a Gaussian fit and p is its upper tail at
/// the observed value. For order consistency p is the fraction of null values
/// at or above the observed value.
pub fn permutation_test(
    model: &[f64],
    human: &[f64],
    measure: Measure,
    cfg: &PermutationConfig,
) -> Result<PermutationOutcome> {
    validate(model, human, cfg)?;
    let n = model.len();
    match measure {
        Measure::R => {
            let observed = pearson_r(model, human)?;
            let (samples, exhaustive) = null_samples(model, human, cfg, true);
            r_outcome(observed, samples.into_iter().map(|s| s.0).collect(), cfg, exhaustive)
        }
        Measure::Ocp => {
            pairwise_oc(model, human)?;
            let (samples, exhaustive) = null_samples(model, human, cfg, false);
            let halves: Vec<u64> = samples.into_iter().map(|s| s.1).collect();
            Ok(ocp_outcome(
                oc_half_credits(model, human),
                (n * (n - 1) / 2) as u64,
                &halves,
                cfg,
                exhaustive,
            ))
        }
    }
}

/// Both measures from one shared set of permutations.
pub fn permutation_test_both(
    model: &[f64],
    human: &[f64],
    cfg: &PermutationConfig,
) -> Result<(PermutationOutcome, PermutationOutcome)> {
    validate(model, human, cfg)?;
    let n = model.len();
    let observed_r = pearson_r(model, human)?;
    let (samples, exhaustive) = null_samples(model, human, cfg, true);
    let (rs, halves): (Vec<f64>, Vec<u64>) = samples.into_iter().unzip();
    let r = r_outcome(observed_r, rs, cfg, exhaustive)?;
    let oc = ocp_outcome(
        oc_half_credits(model, human),
        (n * (n - 1) / 2) as u64,
        &halves,
        cfg,
        exhaustive,
    );
    Ok((r, oc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n_perm: usize, seed: u64, exhaustive_limit: u64) -> PermutationConfig {
        PermutationConfig {
            n_perm,
            seed,
            exhaustive_limit,
        }
    }

    #[test]
    fn lexicographic_enumeration_covers_all() {
        let mut p = vec![0, 1, 2, 3];
        let mut seen = std::collections::HashSet::new();
        loop {
            seen.insert(p.clone());
            if !next_permutation(&mut p) {
                break;
            }
        }
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn exhaustive_identity_three_items() {
        // Oracle: the six orderings of three items against [1,2,3] give
        // order consistencies {1, 2/3, 2/3, 1/3, 1/3, 0}.
        let v = [1.0, 2.0, 3.0];
        let out = permutation_test(&v, &v, Measure::Ocp, &cfg(10, 1, 40_320)).unwrap();
        assert!(out.null.exhaustive);
        assert_eq!(out.null.n_permutations, 6);
        assert_eq!(out.observed, 1.0);
        let mut s = out.null.samples.clone();
        s.sort_by(f64::total_cmp);
        assert_eq!(s, vec![0.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(out.p, 1.0 / 6.0);
    }

    #[test]
    fn anti_ordered_is_not_significant() {
        let h: Vec<f64> = (0..12).map(f64::from).collect();
        let m: Vec<f64> = h.iter().rev().copied().collect();
        let out = permutation_test(&m, &h, Measure::Ocp, &cfg(1000, 3, 0)).unwrap();
        assert_eq!(out.p, 1.0);
        let out = permutation_test(&m, &h, Measure::R, &cfg(1000, 3, 0)).unwrap();
        assert!(out.p > 0.99);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let m: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64 + 0.1 * i as f64).collect();
        let h: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| permutation_test_both(&m, &h, &cfg(3000, 42, 100)).unwrap())
        };
        let (a_r, a_o) = run(1);
        let (b_r, b_o) = run(4);
        assert_eq!(a_r.p.to_bits(), b_r.p.to_bits());
        assert_eq!(a_o.p.to_bits(), b_o.p.to_bits());
        assert_eq!(a_r.null.samples, b_r.null.samples);
    }

    #[test]
    fn shared_null_matches_single_measure() {
        let m = [0.3, 1.2, -0.5, 2.2, 0.9, 1.7, -1.1, 0.0, 0.4, 2.9];
        let h = [1.0, 2.0, 0.0, 3.5, 1.1, 1.9, -2.0, 0.3, 0.2, 4.0];
        let c = cfg(2000, 9, 100);
        let (r, o) = permutation_test_both(&m, &h, &c).unwrap();
        let r1 = permutation_test(&m, &h, Measure::R, &c).unwrap();
        let o1 = permutation_test(&m, &h, Measure::Ocp, &c).unwrap();
        assert_eq!(r.p, r1.p);
        assert_eq!(o.p, o1.p);
    }

    #[test]
    fn rejects_zero_permutations() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert!(permutation_test(&v, &v, Measure::Ocp, &cfg(0, 0, 0)).is_err());
    }
}

//! Evaluation mathematics: agreement metrics, permutation nulls, multiple
//! comparison correction and reliability adjustment.

mod adjust;
mod compare;
mod describe;
mod fdr;
mod metrics;
mod permutation;

pub use adjust::{adjust_upper_bound, AdjustedScore};
pub use compare::{compare_schemes, SchemeComparison};
pub use describe::{iqr, mean, median, quantile, sample_sd, zscore};
pub use fdr::{fdr_bh, fdr_by, FdrResult};
pub use metrics::{oc_half_credits, pairwise_oc, pearson_r};
pub use permutation::{
    permutation_test, permutation_test_both, stream_rng, Measure, NullDistribution,
    PermutationConfig, PermutationOutcome, DEFAULT_EXHAUSTIVE_LIMIT, DEFAULT_PERMUTATIONS,
};

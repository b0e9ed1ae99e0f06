//! Semantic projection of word embeddings onto antonym-defined feature scales,
//! and the statistics used to compare projections with human ratings.
//!
//! The typical flow is: load an [`EmbeddingStore`], build a
//! [`FeatureSubspace`] from a pair of antonym pole sets, [`project`] category
//! items onto it, and evaluate the scores against a [`RatingsTable`] with
//! [`evaluate_experiment`].

pub mod dataset;
pub mod embed_store;
pub mod error;
pub mod evaluate;
pub mod harness;
mod linalg;
pub mod projection;
pub mod ratings;
pub mod stats;
pub mod subspace;
pub mod synthetic;

pub use dataset::{load_dataset, select_pairs, Dataset, ExperimentId};
pub use embed_store::{EmbeddingStore, Resolution, DEFAULT_VOCAB_LIMIT};
pub use error::{Error, Result};

pub use projection::{distance_control, pca_viz, project, project_single_end, ProjectionResult};
pub use ratings::{load_ratings, RatingsTable, ReliabilityReport};
pub use stats::{Measure, PermutationConfig};
pub use subspace::{alignment_diagnostics, build_subspace, FeaturePoles, FeatureSubspace};
pub use evaluate::{evaluate_experiment, outlier_sweep, EvalConfig, EvalReport, SweepPoint};
pub use harness::{run_all, run_with, RunConfig, RunSummary};

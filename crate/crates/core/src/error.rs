use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embedding file {0} is empty")]
    EmptyEmbeddings(PathBuf),

    #[error("cache format error: {0}")]
    CacheFormat(String),

    #[error("token {0:?} is not in the vocabulary")]
    NotInVocabulary(String),

    #[error("item {0:?} cannot be resolved: neither the joined token nor all constituents are in the vocabulary")]
    Unresolvable(String),

    #[error("feature {feature:?}: pole words not in the vocabulary: {words:?}")]
    MissingPoleWord { feature: String, words: Vec<String> },

    #[error("feature {0:?}: mean pole difference has zero norm")]
    ZeroDirection(String),

    #[error("invalid feature poles for {feature:?}: {message}")]
    InvalidPoles { feature: String, message: String },

    #[error("{0}")]
    InvalidInput(String),

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("ratings {path}: {message}")]
    Ratings { path: String, message: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("experiment {experiment}: {source}")]
    Experiment {
        experiment: String,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }

    /// Wraps the error with the experiment it occurred in.
    pub fn in_experiment(self, experiment: impl ToString) -> Self {
        Error::Experiment {
            experiment: experiment.to_string(),
            source: Box::new(self),
        }
    }
}

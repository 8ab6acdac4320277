use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("zero variance: all spectra are identical")]
    ZeroVariance,

    #[error("rotation budget exceeded: requested {requested} rotations, limit is {limit}")]
    RotationBudgetExceeded { requested: usize, limit: usize },

    #[error("perplexity search for point {index} did not converge within {iterations} iterations")]
    PerplexitySearch { index: usize, iterations: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("diverged at iteration {iteration}: energy {energy:e} exceeds {limit:e}")]
    Diverged {
        iteration: usize,
        energy: f64,
        limit: f64,
    },

    #[error("unsupported field family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("zero vector has no spectral angle")]
    ZeroVector,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("class {class} has {count} member(s); at least 2 are required")]
    ClassTooSmall { class: usize, count: usize },

    #[error("dataset has no labels")]
    MissingLabels,

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroVariance
                | Error::PerplexitySearch { .. }
                | Error::NonFinite(_)
                | Error::NonFiniteGradient { .. }
                | Error::Diverged { .. }
        )
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal is empty")]
    EmptySignal,

    #[error("signal contains a non-finite sample at index {0}")]
    NonFinite(usize),

    #[error("signal of {n_samples} samples is too short (need at least {required})")]
    TooShort { n_samples: usize, required: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("band {name} [{low_hz}, {high_hz}] Hz contains no frequency bins")]
    EmptyBand { name: String, low_hz: f64, high_hz: f64 },

    #[error("channel {0} not found")]
    MissingChannel(String),

    #[error("duplicate channel name {0}")]
    DuplicateChannel(String),

    #[error("trial {trial}: file {path} has {actual} bytes, expected {expected}")]
    SizeMismatch {
        trial: String,
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("trial {trial}: sample rate {actual} Hz differs from declared {declared} Hz")]
    RateMismatch { trial: String, declared: f64, actual: f64 },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("correlation undefined: input has zero variance")]
    ZeroVariance,

    #[error("linear system is singular (lambda = {lambda})")]
    Singular { lambda: f64 },

    #[error("{routine} did not converge after {iterations} iterations")]
    NoConvergence { routine: &'static str, iterations: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::NoConvergence { .. } | Error::ZeroVariance
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

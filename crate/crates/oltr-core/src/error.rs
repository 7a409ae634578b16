use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("feature dimensionality mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite gradient component at index {index}: {value}")]
    NonFiniteGradient { index: usize, value: f64 },

    #[error("episode has no click feedback attached")]
    ClicksMissing,

    #[error("gradient window holds {got} vectors, need at least {need}")]
    WindowTooSmall { need: usize, got: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

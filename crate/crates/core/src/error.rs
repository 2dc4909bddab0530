use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("header mismatch: missing columns {missing:?}, unexpected columns {extra:?}")]
    HeaderMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("cannot parse value {value:?} at row {row}, column {column:?}")]
    Parse { row: usize, column: String, value: String },
    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model fingerprint mismatch: expected {expected:016x}, got {got:016x}")]
    FingerprintMismatch { expected: u64, got: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("eigensolver did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("duplicate participant id {0:?}")]
    DuplicateParticipant(String),
    #[error("unknown participant id {0:?}")]
    UnknownParticipant(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }
}

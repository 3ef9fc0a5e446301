use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate record id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate (zero-norm) vector: {0}")]
    DegenerateVector(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty query")]
    EmptyQuery,

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("id {id} out of range for table with {rows} rows")]
    IdOutOfRange { id: usize, rows: usize },

    #[error("batch of size {0} is too small (need at least 2)")]
    BatchTooSmall(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch}; record ids: {ids:?}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        ids: Vec<String>,
    },

    #[error("corrupt file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("digest mismatch: expected {expected}, found {actual}")]
    DigestMismatch { expected: String, actual: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Corrupt {
            path: path.into(),
            message: message.into(),
        }
    }
}

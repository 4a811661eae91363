use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the transform library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("unsupported bit depth: {0}")]
    BitDepth(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("image decode failed: {0}")]
    Decode(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("non-finite input sample at {0}")]
    NonFinite(String),

    #[error("operation not defined for the {0} convention")]
    Convention(&'static str),

    #[error("duplicate kernel index (n={n}, m={m})")]
    DuplicateIndex { n: usize, m: i64 },

    #[error("{family} basis lost working precision at order {order}")]
    PrecisionLoss { family: &'static str, order: i64 },
}

pub type Result<T> = std::result::Result<T, Error>;

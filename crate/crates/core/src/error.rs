use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at layer {layer}")]
    NonFinite { layer: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("group size {m} exceeds the {n} valid documents")]
    GroupTooLarge { m: usize, n: usize },

    #[error("full enumeration needs {groups} groups (limit {limit}); use sampled mode")]
    EnumerationTooLarge { groups: u128, limit: u128 },

    #[error("label {value} at slot {slot} is invalid: {reason}")]
    InvalidLabel {
        slot: usize,
        value: f64,
        reason: &'static str,
    },

    #[error("clicked slot {slot} has no propensity weight")]
    MissingWeight { slot: usize },

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("unsupported model format version {0}")]
    UnsupportedFormat(u32),

    #[error("model document: {0}")]
    Json(#[from] serde_json::Error),

    #[error("backward pass: cache does not match the network")]
    CacheMismatch,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

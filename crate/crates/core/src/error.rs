//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A mandatory dataset file is absent.
    #[error("missing dataset file: {0}")]
    MissingFile(PathBuf),

    /// A dataset file exists but its contents violate the format.
    #[error("malformed dataset: {0}")]
    MalformedDataset(String),

    /// A token in a dataset file could not be parsed.
    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    /// An argument violates an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A node or class index is out of range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Tensor shapes do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Parameter aggregation failed for a specific client.
    #[error("aggregation error for client {client_id}: {message}")]
    Aggregation { client_id: usize, message: String },

    /// An experiment or federation configuration is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// A heterogeneity analysis cannot be carried out on the given data.
    #[error("analysis error: {0}")]
    Analysis(String),

    /// The requested operation does not exist for this model variant.
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// A parameter checkpoint is unreadable or inconsistent.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use std::path::PathBuf;

use nesr_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NesrError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite loss at iteration {iteration} (lr {lr:e}, seed {seed})")]
    NonFiniteLoss { iteration: u64, lr: f64, seed: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl NesrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NesrError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        NesrError::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NesrError>;

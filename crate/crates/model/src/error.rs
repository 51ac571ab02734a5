use std::path::PathBuf;

use priordepth_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint {}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },
    #[error("checkpoint is incompatible, mismatched keys: {}", keys.join(", "))]
    Incompatible { keys: Vec<String> },
    #[error("non-finite loss on batch [{}]", ids.join(", "))]
    NonFiniteLoss { ids: Vec<String> },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

impl ModelError {
    pub(crate) fn checkpoint(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        ModelError::Checkpoint {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}

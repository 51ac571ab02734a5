use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty prior")]
    EmptyPrior,
    #[error("empty mask")]
    EmptyMask,
    #[error("insufficient correspondences: need at least 8, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate geometry: consensus set of {0} correspondences")]
    DegenerateGeometry(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("empty dataset at {}", .0.display())]
    EmptyDataset(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Image { path: PathBuf, msg: String },
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CoreError::Image {
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}

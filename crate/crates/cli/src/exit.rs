//! Exit codes: 0 success, 2 usage or configuration error, 3 data or
//! compatibility error.

use std::fmt;

use priordepth_core::CoreError;
use priordepth_model::ModelError;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;

/// Marks an error as the caller's fault (bad flags, config or output path).
#[derive(Debug)]
pub struct UsageError(anyhow::Error);

impl UsageError {
    pub fn msg(m: impl fmt::Display + fmt::Debug + Send + Sync + 'static) -> anyhow::Error {
        UsageError(anyhow::Error::msg(m)).into()
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub trait UsageContext<T> {
    fn usage(self) -> anyhow::Result<T>;
}

impl<T, E: Into<anyhow::Error>> UsageContext<T> for Result<T, E> {
    fn usage(self) -> anyhow::Result<T> {
        self.map_err(|e| UsageError(e.into()).into())
    }
}

pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if let Some(ModelError::Config(_)) = cause.downcast_ref::<ModelError>() {
            return USAGE;
        }
        if let Some(CoreError::InvalidArgument(_)) = cause.downcast_ref::<CoreError>() {
            return USAGE;
        }
    }
    DATA
}

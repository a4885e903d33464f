use thiserror::Error;

use crate::numcore::NumError;
use crate::seqdata::SeqError;

/// Crate-wide error.
///
/// Variants split along the CLI exit-code contract: validation problems map
/// to exit code 2, numeric failures (non-finite losses, diverging
/// integrations, collapsed generators) map to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Seq(#[from] SeqError),

    #[error(transparent)]
    Num(#[from] NumError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Training or integration produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures that come from the numbers rather than the inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_) => true,
            Error::Num(e) => e.is_numeric(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<crate::metrics::MetricError> for Error {
    fn from(e: crate::metrics::MetricError) -> Self {
        match e {
            crate::metrics::MetricError::NonFinite(_) => Error::Numeric(e.to_string()),
            other => Error::InvalidArgument(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

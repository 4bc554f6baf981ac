use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The scorer returned something unusable or died. `payload` carries the
    /// raw response line when one was received.
    #[error("oracle failure: {message}")]
    OracleFailure { message: String, payload: Option<String> },

    #[error("exact enumeration refused: {m} sources exceeds the limit of {max} (2^m subset trainings); use the Monte-Carlo engine instead")]
    TooLarge { m: usize, max: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("cache file {path}: {message}")]
    CacheFile { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// The valuation stopped early. The counters describe the work folded
    /// before the failure.
    #[error("valuation aborted after {epochs_completed} epochs ({cache_misses} trainings): {source}")]
    Aborted {
        epochs_completed: u64,
        cache_misses: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn oracle(msg: impl Into<String>, payload: Option<String>) -> Self {
        Error::OracleFailure {
            message: msg.into(),
            payload,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through `Aborted`.
    pub fn root(&self) -> &Error {
        match self {
            Error::Aborted { source, .. } => source.root(),
            other => other,
        }
    }
}

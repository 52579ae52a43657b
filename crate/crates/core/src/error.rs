//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by every module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value passed to an operation violates its precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration struct or config file is internally inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A file on disk does not match the expected format.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// Underlying I/O failure, with the offending path.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

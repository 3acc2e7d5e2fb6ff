use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient in conv block {block}: {count} bad values (first at index {first})")]
    NonFiniteGradient { block: usize, count: usize, first: usize },

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("no valid pixels to evaluate: {0}")]
    EmptyDomain(String),

    #[error("relative error undefined: reference robustness is 1")]
    UndefinedRelativeError,

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("unsupported format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

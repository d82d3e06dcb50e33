use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content. `location` names the line, row or byte offset.
    #[error("format error in {path} ({location}): {message}")]
    Format {
        path: PathBuf,
        location: String,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("could not place {requested} blobs after {attempts} attempts")]
    Placement { requested: usize, attempts: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(
        path: impl Into<PathBuf>,
        location: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Format {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }
}

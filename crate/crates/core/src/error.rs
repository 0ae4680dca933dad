use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computation produced a NaN or infinity.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A text file (dataset, model, stats) could not be parsed.
    #[error("{path}: line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        path: String,
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

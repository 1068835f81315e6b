use std::io;

use thiserror::Error;

/// Errors raised across the library.
///
/// The CLI maps [`Error::Argument`] and [`Error::Config`] to exit code 2 and
/// everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid point: {0}")]
    Validation(String),

    #[error("bad format: {0}")]
    Format(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

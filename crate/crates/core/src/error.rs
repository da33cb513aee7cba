use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A configuration field failed validation.
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    /// A dataset or table file could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// Two inputs that must share a sample grid do not.
    #[error("incompatible sample times: {0}")]
    Incompatible(String),

    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the CLI: 2 for usage/config problems, 3 for I/O and format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config { .. } | Error::Incompatible(_) => 2,
            Error::Io(_) | Error::Format(_) => 3,
            Error::Numerical(_) => 1,
        }
    }
}

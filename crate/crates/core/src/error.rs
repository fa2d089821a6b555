use std::io;

use thiserror::Error;

/// Errors produced by the embedding, decoding, training and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} out of range: {value} not in [{low}, {high}]")]
    OutOfRange {
        what: &'static str,
        value: usize,
        low: usize,
        high: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn mismatch(what: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch { what, expected, actual }
    }

    /// True for errors caused by the contents of input data rather than by
    /// configuration or parameters.
    pub fn is_data_fault(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Format(_) | Error::Empty(_) | Error::NonFinite(_) | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

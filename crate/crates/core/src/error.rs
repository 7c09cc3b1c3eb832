use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated an operation precondition (empty sequence, T too small, ...).
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    /// A value fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The layer was asked to run backward for a different sequence length than forward saw.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn dims(expected: &[usize], actual: &[usize]) -> Self {
        Error::Dimension {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}

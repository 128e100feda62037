use std::io;

use thiserror::Error;

/// Errors raised by the library and mapped onto CLI exit statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),

    #[error("evaluation failure: {0}")]
    EvaluationFailure(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("hypothesis violation: {0}")]
    HypothesisViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status for this error (0 is reserved for success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::UnsupportedDistribution(_)
            | Error::InvalidConfiguration(_)
            | Error::Unsupported(_)
            | Error::Usage(_) => 2,
            Error::Io(_) => 3,
            Error::EvaluationFailure(_) | Error::NumericalFailure(_) => 4,
            Error::HypothesisViolation(_) => 5,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

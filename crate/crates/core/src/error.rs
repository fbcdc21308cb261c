use thiserror::Error;

/// Errors raised by the simulators, path maps and rate evaluators.
///
/// Infinite rates are not errors; they are reported through
/// [`crate::rates::RateValue`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("kernel factorization unsupported: {0}")]
    FactorizationUnsupported(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("infeasible constraint: {0}")]
    Infeasible(String),

    #[error("not a probability measure: {0}")]
    NotProbability(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

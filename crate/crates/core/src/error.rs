use thiserror::Error;

/// Errors raised by constructors and parameterised operations.
///
/// Runtime outcomes of simulations and verifiers (divergence, failed checks)
/// are reported as verdicts, not errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("AoI path violates unit growth at n={index}: tau({index})={prev}, tau({next_index})={next}", next_index = index + 1)]
    UnitGrowth { index: usize, prev: u64, next: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("integrator produced a non-finite state at t={0}")]
    NonFinite(f64),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

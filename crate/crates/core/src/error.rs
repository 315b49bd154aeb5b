use thiserror::Error;

/// Errors raised by game evaluation, conjecture handling and the designers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value while evaluating {context} at {point:?}")]
    NonFinite { context: String, point: Vec<f64> },

    #[error("singular system in {0}")]
    Singular(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no conjecture registered for pair ({i}, {j})")]
    MissingConjecture { i: usize, j: usize },

    #[error("value outside its domain: {0}")]
    OutOfDomain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("iterate became non-finite at step {step}; last finite iterate {last:?}")]
    Diverged { step: usize, last: Vec<f64> },

    #[error("malformed file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected,
            found,
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>, point: &[f64]) -> Self {
        Error::NonFinite {
            context: context.into(),
            point: point.to_vec(),
        }
    }
}

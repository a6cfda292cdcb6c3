use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical procedure did not reach its target accuracy.
    #[error("numeric error: {message} (achieved tolerance {achieved:e})")]
    Numeric { message: String, achieved: f64 },

    /// A value violated a structural invariant (monotonicity, positivity, ...).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// The budget function never straddled the target wealth during bracket
    /// expansion. This does not prove that no optimum exists.
    #[error("no Lagrange multiplier found: {0}")]
    NoSolution(String),

    /// A quantity exceeded the floating-point range.
    #[error("overflow: {0}")]
    Overflow(String),

    #[error("unsupported policy: {0}")]
    UnsupportedPolicy(String),

    #[error("invalid specification: {0}")]
    Spec(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>, achieved: f64) -> Self {
        Error::Numeric {
            message: msg.into(),
            achieved,
        }
    }
}

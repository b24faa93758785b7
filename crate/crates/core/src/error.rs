use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set violates a type invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two inputs that must describe the same geometry do not.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    /// Doubling the quadrature resolution moved the result by more than the tolerance.
    #[error("quadrature not converged: node doubling changed result by {change:.3e} (tolerance {tolerance:.1e})")]
    Quadrature { change: f64, tolerance: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    /// The direct integrator lost its excitation budget.
    #[error("solver instability: excitation budget violated by {violation:.3e}")]
    Instability { violation: f64 },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the numeric kernel, distributions and estimation code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iteration or series expansion failed to reach its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A requested moment does not exist for the given parameters.
    #[error("moment existence: {0}")]
    Existence(String),

    /// A structural parameter constraint (e.g. pν > 1) is violated.
    #[error("constraint violated: {0}")]
    Constraint(String),

    /// Vector/matrix dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A computation produced NaN or an unexpected infinity.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Malformed input data (CSV cell, schema, formula); the message carries
    /// row/column locations where applicable.
    #[error("data error: {0}")]
    Data(String),

    /// A matrix inversion failed; the message reports the condition number.
    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

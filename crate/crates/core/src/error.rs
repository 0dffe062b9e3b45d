//! Error type shared by every module of the crate.

use alloc::string::String;

/// Errors reported by the simulation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A configuration value is outside its admissible range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// A function argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A correlation matrix could not be factorized.
    #[error("correlation matrix for BS {bs}, user {user} is not PSD (min eigenvalue {min_eig:e})")]
    Model { bs: usize, user: usize, min_eig: f64 },
    /// Dimensions of the inputs do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// A factorization or linear solve failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// An iteration hit its cap before reaching the tolerance.
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { what: String, iterations: usize, residual: f64 },
    /// An optional capability was requested but is not present.
    #[error("{0} is unavailable")]
    Unavailable(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T> = core::result::Result<T, Error>;

//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model or configuration parameter violates a stated invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        /// Name of the offending field.
        name: &'static str,
        /// Human-readable statement of the violated invariant.
        reason: String,
    },

    /// A point lies outside the domain of a function (for example `xi <= 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// A basis order outside `0..=max` was requested.
    #[error("basis order ({m}, {n}) out of range (max ({m_max}, {n_max}))")]
    OrderOutOfRange {
        /// Requested Hermite order.
        m: usize,
        /// Requested Laguerre order.
        n: usize,
        /// Largest Hermite order of the basis.
        m_max: usize,
        /// Largest Laguerre order of the basis.
        n_max: usize,
    },

    /// A Gram or system matrix is numerically singular.
    #[error("matrix is numerically singular (condition estimate {condition:.3e}): {context}")]
    Singular {
        /// Where the failure occurred.
        context: String,
        /// Estimated 2-norm condition number.
        condition: f64,
    },

    /// Two objects that must agree in size or parameters do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// A complex shift or path lies outside its admissible region.
    #[error("inadmissible shift: {0}")]
    Inadmissible(String),

    /// A numerical integral failed to converge.
    #[error("integration did not converge: {0}")]
    Integration(String),

    /// Reading or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

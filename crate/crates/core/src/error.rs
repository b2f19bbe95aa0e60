//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by construction, validation, solvers, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain type was constructed with inconsistent or out-of-range data.
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    /// Sequence lengths (trace, tariff, fleet) disagree.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// A value fell outside the domain of an operation.
    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    /// Brute-force / lattice guardrail exceeded.
    #[error("instance too large for exhaustive solve: {0}")]
    GuardRail(String),

    /// An iterative solver failed to reach its tolerances.
    #[error("solver did not converge: {0}")]
    SolverNonConvergence(String),

    /// Trace ingestion failure (schema, timestamps, gaps).
    #[error("trace error: {0}")]
    Trace(String),

    /// Configuration file problems.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    pub fn out_of_range(what: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRange {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by validation, solving, and I/O across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector or matrix dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data failed validation; the message names the offending record.
    #[error("validation error: {0}")]
    Validation(String),

    /// The conditioning event has probability zero; the estimand is 0/0.
    #[error("undefined conditioning: {0}")]
    UndefinedConditioning(String),

    /// The conic solver did not return a usable solution.
    #[error("solver failure: {0}")]
    Solver(String),

    /// The calibrated slack ball is empty: no mixture is compatible with
    /// the data at the chosen level, which rejects the model itself.
    #[error("specification test rejected: {0}")]
    SpecificationTest(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

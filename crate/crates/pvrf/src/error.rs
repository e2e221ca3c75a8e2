//! Error type shared across the crate.
//!
//! Variants are grouped into two broad families so that callers (notably the
//! command-line front end) can distinguish problems with the *input data* from
//! problems that arise *numerically* during fitting:
//!
//! * [`ErrorClass::Data`] — malformed files, schema violations, missing
//!   values, unknown column names, impossible requests (e.g. a contrast level
//!   that does not exist).
//! * [`ErrorClass::Numeric`] — an estimator was given well-formed data but
//!   could not produce a finite answer (non-convergence, rank deficiency,
//!   monotone likelihood, undefined weights, …).

use thiserror::Error;

/// Coarse classification of an [`Error`], used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The input data or request was invalid.
    Data,
    /// A numerical procedure failed on valid input.
    Numeric,
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// I/O failure while reading or writing a file.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV-level failure (malformed record, wrong field count, …).
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// JSON (de)serialization failure for schemas, models, or metadata.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// The schema references a column that is not present in the data.
    #[error("column {name:?} declared in schema but missing from data")]
    MissingColumn { name: String },

    /// A value could not be parsed under the declared column kind.
    #[error("row {row}: cannot parse {value:?} as {expected} for column {column:?}")]
    BadValue {
        row: usize,
        column: String,
        value: String,
        expected: &'static str,
    },

    /// A required field is empty and incomplete rows were not dropped.
    #[error("row {row}: missing value in column {column:?} (rerun with --drop-incomplete to skip such rows)")]
    MissingValue { row: usize, column: String },

    /// A categorical value was not among the declared levels.
    #[error("row {row}: level {value:?} not among declared levels of column {column:?}")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },

    /// Follow-up times must be positive and finite; statuses 0 or 1.
    #[error("row {row}: invalid survival outcome: {reason}")]
    BadOutcome { row: usize, reason: String },

    /// Inputs whose lengths must agree did not.
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A request referenced something that does not exist.
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    /// The dataset is empty or became empty after filtering.
    #[error("dataset is empty{0}")]
    EmptyData(String),

    /// Model file had an unsupported format version.
    #[error("unsupported model format version {found} (supported: {supported})")]
    ModelVersion { found: u32, supported: u32 },

    /// The design matrix is rank deficient (collinear columns).
    #[error("design matrix is rank deficient: {context}")]
    RankDeficient { context: String },

    /// An iterative fit did not reach its convergence tolerance.
    #[error("{what} did not converge after {iterations} iterations (last criterion {criterion:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        criterion: f64,
    },

    /// Partial-likelihood maximum lies at infinity (separated data).
    #[error("monotone partial likelihood: coefficient for {column:?} diverged; the data are separated")]
    MonotoneLikelihood { column: String },

    /// Scale parameter of a parametric model collapsed towards zero.
    #[error("scale parameter collapsed below {floor:e}; the fit is degenerate")]
    ScaleCollapse { floor: f64 },

    /// Inverse-probability-of-censoring weight has a zero denominator.
    #[error("censoring-survival estimate is zero at the evaluation point needed by row {row}; inverse weights are undefined")]
    ZeroCensoringWeight { row: usize },

    /// Anything else that went wrong numerically.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Classify this error for exit-code purposes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::RankDeficient { .. }
            | Error::NotConverged { .. }
            | Error::MonotoneLikelihood { .. }
            | Error::ScaleCollapse { .. }
            | Error::ZeroCensoringWeight { .. }
            | Error::Numeric(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

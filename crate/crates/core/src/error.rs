//! Crate-wide error type.
//!
//! One enum covers every module so that pipeline code (training, harness,
//! CLI) can thread a single `Result` through. Variants carry the indices and
//! values needed to make the message actionable.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square with at least two rows, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },

    #[error("row {row} sums to {sum}, expected 1 within tolerance")]
    RowSum { row: usize, sum: f64 },

    #[error("diagonal entry {value} in row {row} must exceed 0.5")]
    Dominance { row: usize, value: f64 },

    #[error("entry ({row},{col}) = {value} is outside [0,1]")]
    EntryRange { row: usize, col: usize, value: f64 },

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("protected value {value} at row {row} of attribute {attribute} exceeds group count {groups}")]
    GroupRange {
        attribute: usize,
        row: usize,
        value: usize,
        groups: usize,
    },

    #[error("attribute index {index} out of range, dataset has {count}")]
    AttributeOutOfRange { index: usize, count: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("split leaves an empty side: train {train}, test {test}")]
    EmptySplit { train: usize, test: usize },

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("row {row}, column {column}: unknown category {value:?}")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
    },

    #[error("column {name:?} missing from header")]
    MissingColumn { name: String },

    #[error("all group rates are undefined")]
    AllUndefined,

    #[error("non-positive denominator in {context}: {value}")]
    NonPositiveDenominator { context: &'static str, value: f64 },

    #[error("operation requires a binary protected attribute, got {groups} groups")]
    BinaryOnly { groups: usize },

    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,

    #[error("group proportions invalid: {message}")]
    BadProportions { message: String },

    #[error("parameter {name} invalid: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Convenience constructor for parameter validation failures.
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

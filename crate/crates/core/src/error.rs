use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("dimension mismatch: expected n = {expected}, got n = {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    /// Row and column are 1-based.
    #[error("non-finite cost entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("{what}: n = {n} exceeds the limit {limit}; {hint}")]
    TooLarge {
        what: &'static str,
        n: usize,
        limit: usize,
        hint: &'static str,
    },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error(
        "quadrature for k = {k} did not reach tolerance {tolerance:e}: \
         estimated error {estimate:e} after {intervals} subintervals"
    )]
    Quadrature {
        k: usize,
        tolerance: f64,
        estimate: f64,
        intervals: usize,
    },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

use thiserror::Error;

/// Failures surfaced by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what} overflows the scalar range at x = {x}")]
    Overflow { what: &'static str, x: f64 },

    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    #[error("eigenfunction not positive at lambda = {lambda}, r = {r} (value {value})")]
    PositivityViolation { lambda: f64, r: f64, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient snapshots: {0}")]
    InsufficientSnapshots(String),
}

pub type Result<T> = std::result::Result<T, Error>;

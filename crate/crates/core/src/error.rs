use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("resolution mismatch: expected L = {expected}, found L = {found}")]
    ResolutionMismatch { expected: u32, found: u32 },

    #[error("invalid exponent p = {0}; need p >= 1")]
    InvalidExponent(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bump interval spans {cells:.2} grid cells; at least 8 are required")]
    BumpTooNarrow { cells: f64 },

    #[error("source bump has mean {0:e}; a mean-zero source is required")]
    NonzeroMean(f64),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("no admissible constant up to {limit:e}: |Omega| = {measure} is still >= 1/2")]
    ConstantDiverged { limit: f64, measure: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

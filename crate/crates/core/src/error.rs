use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (max jitter {max_jitter:e} exhausted)")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("hyperparameter optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("lookup table needs at least 2 distinct breakpoints, got {0}")]
    DegenerateTable(usize),

    #[error("sensor map is not strictly increasing near y* = {at}; readings of a non-monotone sensor cannot be inverted")]
    NonMonotonic { at: f64 },

    #[error("reading {value} lies outside the invertible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("campaign has no unflagged trials")]
    EmptyCampaign,

    #[error("{path}: row {row}: {msg}")]
    Csv {
        path: String,
        row: usize,
        msg: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed input or configuration rather
    /// than by a numerical failure at runtime.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidData(_)
                | Error::Csv { .. }
                | Error::Json(_)
                | Error::DimensionMismatch { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::conservative::TraceEntry;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite gradient at sample {index} (x = {point:?})")]
    NonFiniteGradient { index: usize, point: Vec<f64> },

    #[error("non-finite function value at x = {point:?}")]
    NonFiniteValue { point: Vec<f64> },

    #[error("active dimension {d} out of range for input dimension {dim}")]
    DimensionOutOfRange { d: usize, dim: usize },

    #[error("constant function: the gradient covariance spectrum is identically zero")]
    ConstantFunction,

    #[error("empty slice: active coordinate {y:?} lies outside the projected domain")]
    EmptySlice { y: Vec<f64> },

    #[error("slice sampler failed: {0}")]
    SamplerFailure(String),

    #[error("kernel matrix factorization failed after jitter {jitter:e}: {reason}")]
    Factorization { jitter: f64, reason: String },

    #[error("rank-deficient least-squares design ({rows} rows, {cols} columns)")]
    RankDeficient { rows: usize, cols: usize },

    #[error("signed-distance table is empty")]
    EmptyTable,

    #[error(
        "tau {tau} below base level: conservativeness at zero bias is already {base:.4}; \
         the bias would be very small relative to the mean signed distance"
    )]
    BelowBaseLevel { tau: f64, base: f64 },

    #[error("bias bracket exhausted: {reason}")]
    BracketExhausted {
        reason: String,
        trace: Vec<TraceEntry>,
    },

    #[error("reduced problem infeasible: {0}")]
    ReducedInfeasible(String),

    #[error("stale finite-element solution: assembled for a different design")]
    StaleSolution,

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

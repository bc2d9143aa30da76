//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by kernel evaluation, estimation, sampling and the
/// experiment engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),

    #[error("discrete symbol out of range: value {value} at coordinate {coord} (vocab size {vocab})")]
    OutOfRangeSymbol {
        value: f64,
        coord: usize,
        vocab: u32,
    },

    #[error("operation requires a continuous kernel")]
    KernelNotContinuous,

    #[error("operation requires a discrete kernel")]
    KernelNotDiscrete,

    #[error("non-finite score for observation {obs} draw {draw}")]
    NonFiniteScore { obs: usize, draw: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },

    #[error("median pairwise distance is zero (all points identical)")]
    ZeroMedian,

    #[error("gram diagonal was not computed; V-statistic variance needs it")]
    DiagonalInvalid,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("model has no training data to condition on")]
    MissingTrainingData,

    #[error("state space too large: {states} assignment states (limit {limit})")]
    StateSpaceTooLarge { states: u64, limit: u64 },

    #[error("probability must lie in (0, 1), got {0}")]
    InvalidProbability(f64),

    #[error("{failed} of {total} trials aborted (limit is 5%); first failure: {first}")]
    TooManyAbortedTrials {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed data file: {0}")]
    MalformedData(String),
}

pub type Result<T> = std::result::Result<T, Error>;

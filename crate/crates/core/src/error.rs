use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("second layer is not in {{-1, +1}} (unit {unit} = {value}); rescale before phase II")]
    NotRescaled { unit: usize, value: f64 },

    #[error("zero first-layer weight at unit {unit}: pair gradient is undefined")]
    DegenerateWeight { unit: usize },

    #[error("non-unit input row {row}: norm {norm}")]
    NonUnitRow { row: usize, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("divergence at iteration {iter}: objective {value} (initial {initial})")]
    Divergence {
        iter: usize,
        value: f64,
        initial: f64,
    },

    #[error("matrix is not positive definite after jitter (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("internal consistency: squared distance {0} is negative beyond rounding")]
    NegativeDistance(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

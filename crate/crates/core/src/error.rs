use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite after shift {shift} (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { shift: f64, row: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("eigensolver failed to converge for a {dim}x{dim} matrix")]
    ConvergenceFailure { dim: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("barrier invariant violated at step {step}: {reason}")]
    InvariantViolation { step: usize, reason: String },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("estimate for {name} is unstable: value {value}, bootstrap std error {std_error}")]
    EstimateUnstable {
        name: String,
        value: f64,
        std_error: f64,
    },

    #[error("no closed form available for ensemble {0}")]
    NotAvailable(String),

    #[error("trial {trial} (seed {seed}) failed: {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep over {axis} at value {value} failed: {source}")]
    Sweep {
        axis: String,
        value: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

/// Errors produced anywhere in the reconstruction workbench.
#[derive(Debug, Error)]
pub enum SdrError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {context} at iteration {iteration}")]
    NumericFailure { context: String, iteration: usize },

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    /// Raised when a caller-supplied control hook stops a long computation.
    #[error("cancelled after {completed_iterations} of {total_iterations} outer iterations")]
    Cancelled {
        completed_iterations: usize,
        total_iterations: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SdrError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> SdrError {
    SdrError::InvalidArgument(msg.into())
}

//! One error type for the whole crate.

use thiserror::Error;

/// Everything that can go wrong across kernels, data loading, the model,
/// training, baselines and analysis.
#[derive(Debug, Error)]
pub enum KsmError {
    /// Two vectors or matrices that must agree in size do not.
    #[error("{context}: dimension mismatch ({left} vs {right})")]
    DimensionMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    /// A parameter or input violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A solve required `L + lambda*I` (or another matrix) to be positive
    /// definite and it was not.
    #[error("{context}: matrix is not positive definite (smallest eigenvalue {smallest_eigenvalue:.6e})")]
    NotPositiveDefinite {
        context: String,
        smallest_eigenvalue: f64,
    },

    /// Response dynamics step size exceeds the spectral stability limit.
    #[error("step size {eta} is unstable: require eta_y < {limit:.6e} (= 2 / largest eigenvalue of L + lambda*I)")]
    UnstableStepSize { eta: f64, limit: f64 },

    /// Response dynamics increased the energy for too many consecutive steps.
    #[error("response dynamics diverged: energy rose over {steps} consecutive steps")]
    Diverged { steps: usize },

    /// A parameter became NaN/Inf during training.
    #[error("training aborted at iteration {iteration}: {parameter} contains a non-finite value")]
    NonFiniteParameter {
        iteration: usize,
        parameter: &'static str,
    },

    /// Training hit an unrecoverable numerical condition mid-run.
    #[error("training aborted at iteration {iteration}: {source}")]
    TrainingAborted {
        iteration: usize,
        #[source]
        source: Box<KsmError>,
    },

    /// An IDX image/label file could not be parsed.
    #[error("{path}: {reason}")]
    IdxFormat { path: String, reason: String },

    /// A model checkpoint is malformed or inconsistent.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, KsmError>;

impl KsmError {
    /// Shorthand used by the dimension checks sprinkled through the crate.
    pub(crate) fn dim(context: &str, left: usize, right: usize) -> Self {
        KsmError::DimensionMismatch {
            context: context.to_string(),
            left,
            right,
        }
    }
}

use thiserror::Error;

/// Errors produced by model construction, estimation, sampling and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid composition: {0}")]
    InvalidComposition(String),

    #[error("component {index} is zero; the log-ratio transform is undefined on the boundary")]
    ZeroComponent { index: usize },

    #[error("row {row} has total count zero")]
    DegenerateRow { row: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid weights: {0}")]
    Weight(String),

    #[error("estimating equations are numerically singular (condition number {condition:.3e}): {hint}")]
    SingularSystem { condition: f64, hint: String },

    #[error("robust fit did not converge in {iterations} iterations (last relative change {last_change:.3e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        /// Relative change in the estimate at every iteration.
        trace: Vec<f64>,
        /// Estimate at the final iteration.
        last_pi: Vec<f64>,
    },

    #[error("rejection sampler acceptance rate {rate:.3e} after {proposals} proposals is too low; use the MCMC sampler")]
    LowAcceptance { rate: f64, proposals: u64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("influence matrix G is numerically singular (condition number {condition:.3e})")]
    SingularG { condition: f64 },

    #[error("bootstrap degraded: {failed} of {requested} replicates failed")]
    BootstrapDegraded {
        failed: usize,
        requested: usize,
        partial: Box<crate::inference::BootstrapReport>,
    },

    #[error("scenario `{scenario}` requires parameter `{parameter}`")]
    MissingParameter { scenario: String, parameter: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

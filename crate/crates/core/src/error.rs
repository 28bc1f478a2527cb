//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by model construction, sampling steps, and the run driver.
#[derive(Debug, Error)]
pub enum FilterError {
    /// A model or run configuration is structurally invalid (dimension
    /// mismatch, empty ensemble, non-positive noise scale, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A covariance factorization failed: the matrix is not positive
    /// definite, or a pivot fell below the relative threshold. The library
    /// fails rather than regularizing, so the caller sees the true state.
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    /// The fixed-point iteration of a sampling step did not meet the
    /// convergence tolerance within the configured iteration budget.
    #[error("iteration did not converge after {iters} iterations (last residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    /// A state or weight became non-finite during a sampling step.
    #[error("numerical divergence: {0}")]
    Diverged(String),

    /// The map from reference noise to sample positions lost invertibility
    /// (zero or non-finite determinant).
    #[error("singular sample-map determinant: {0}")]
    SingularJacobian(String),

    /// Every particle carries zero posterior mass; no normalization exists.
    #[error("degenerate ensemble: all log-weights are -inf")]
    DegenerateEnsemble,

    /// An operation requiring a linear model was applied to a model without
    /// linear structure (e.g. the Kalman recursion on a nonlinear model).
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// A per-particle step failed inside the run driver; wraps the cause
    /// with the step and particle where it occurred.
    #[error("step {step}, particle {particle}: {source}")]
    StepFailed {
        step: i64,
        particle: usize,
        #[source]
        source: Box<FilterError>,
    },
}

impl FilterError {
    /// Attach driver context (step index and particle index) to an error.
    pub fn at(self, step: i64, particle: usize) -> FilterError {
        FilterError::StepFailed {
            step,
            particle,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, FilterError>;

//! Nonlinear particle filtering by direct posterior sampling.
//!
//! The central idea: instead of proposing particles from the prior and
//! reweighting (as the bootstrap filter does), each particle solves a small
//! algebraic equation that maps a reference Gaussian draw onto a
//! high-probability region of the posterior itself. For models with additive
//! Gaussian process and observation noise, the posterior exponent is
//! rewritten by completing squares around its minimizer; a draw `xi` from a
//! standard normal is mapped to a state `X` with matched posterior density,
//! and the particle weight only carries the (small, often constant)
//! remainder. The result is an ensemble whose weights stay nearly uniform
//! in regimes where standard reweighting collapses onto one particle.
//!
//! The crate provides:
//!
//! - [`model`]: the state-space model abstraction (Euler-discretized drift
//!   and diffusion, nonlinear observations), particles and ensembles;
//! - [`pseudo_gaussian`]: completion of squares against a Gaussian
//!   reference — the algebraic core shared by every sampler;
//! - [`sampling`]: the per-particle forward, backward-smoothing, and
//!   sparse-observation (joint two-step) samplers with their Jacobians;
//! - [`driver`]: the filter loop combining samplers, weights, resampling,
//!   and metrics over a whole twin experiment;
//! - [`baselines`]: a bootstrap (sample–importance–resample) particle
//!   filter step and a Kalman filter for linear-Gaussian ground truth;
//! - [`models`]: concrete systems, including a plankton ecosystem with a
//!   random growth factor and closed-form Gaussian benchmarks;
//! - [`resample`], [`rng`], [`error`]: supporting machinery.

pub mod baselines;
pub mod driver;
pub mod error;
pub mod model;
pub mod models;
pub mod pseudo_gaussian;
pub mod resample;
pub mod rng;
pub mod sampling;

pub use baselines::{kalman_step, max_normalized_weight, sir_step, KalmanState};
pub use driver::{
    run_filter, FilterKind, ObsSchedule, RunConfig, RunMetrics, StepMetrics,
};
pub use error::{FilterError, Result};
pub use model::{
    observe_likelihood_log, propagate, Ensemble, LinearParts, ObservationRecord, Particle,
    StateSpaceModel,
};
pub use models::{
    iid_gaussian_model, linear_gaussian_model, plankton_model, random_diagonal_linear_model,
    synth_twin_data, PlanktonParams, TwinData, PLANKTON_DIM,
};
pub use pseudo_gaussian::{
    chol_logdet, complete_squares, solve_reference, CholFactor, CovMatrix, PseudoGaussian,
};
pub use resample::{
    distinct_count, normalize_log_weights, resample, resample_indices, resample_subsets,
    should_resample, stratified_thetas, ResampleMode, ResamplePolicy,
};
pub use rng::{rng_substream, standard_normal_vector, StreamRole};
pub use sampling::{
    backward_step, forward_step, jacobian_logdet, prior_step, sparse_step, IterationConfig,
    JacobianMode, SparseStepResult, StartMode, StepResult,
};

//! Discrete-time stochastic state-space models and particle containers.
//!
//! The model class is an Ito-style equation discretized with a fixed step
//! `delta`:
//!
//! ```text
//! x_{n+1} = x_n + F(x_n, n) * delta + sqrt(delta) * G(x_n, n) * v_{n+1},
//! b_n     = h(x_n) + Q * w_n,
//! ```
//!
//! where `v` and `w` are independent standard Gaussian vectors, `G` and `Q`
//! are diagonal (stored as vectors of per-component scales), and `h` may be
//! nonlinear with dense Jacobian `H(x) = dh/dx`. Time is carried as an
//! integer step index; physical time is `index * delta`.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};

type StateFn = Arc<dyn Fn(&DVector<f64>, i64) -> DVector<f64> + Send + Sync>;
type ObsFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type ObsJacFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ClampFn = Arc<dyn Fn(&mut DVector<f64>) + Send + Sync>;

/// Dense matrices of a linear model `F(x) = A x`, `h(x) = H x`.
///
/// Present only on models built from explicit linear structure; the Kalman
/// recursion requires it and refuses models without it.
#[derive(Clone)]
pub struct LinearParts {
    /// Drift matrix `A` (state rate, not the per-step increment).
    pub drift_matrix: DMatrix<f64>,
    /// Observation matrix `H`.
    pub obs_matrix: DMatrix<f64>,
}

/// A state-space model with diagonal process and observation noise.
///
/// Closures are shared behind `Arc` so a model can be cloned cheaply (e.g.
/// to rebuild a variant with halved `delta`) and used across worker threads.
#[derive(Clone)]
pub struct StateSpaceModel {
    /// State dimension `m`.
    pub dim_state: usize,
    /// Observation dimension `k` (`k <= m`).
    pub dim_obs: usize,
    /// Time step `delta > 0`.
    pub delta: f64,
    drift: StateFn,
    diffusion: StateFn,
    obs_map: ObsFn,
    obs_jacobian: ObsJacFn,
    /// Diagonal of the observation noise scale `Q` (length `k`, positive).
    pub obs_noise: DVector<f64>,
    /// Whether `obs_jacobian` is independent of the state. Enables the exact
    /// linearized sample-map determinant as a fast path.
    pub obs_linear: bool,
    /// Linear structure, if the model was built from explicit matrices.
    pub linear: Option<LinearParts>,
    clamp: Option<ClampFn>,
}

impl StateSpaceModel {
    /// Build a model from its component functions.
    ///
    /// `drift` returns the rate `F(x, n)` (length `m`), `diffusion` the
    /// diagonal of `G(x, n)` (length `m`), `obs_map` the observation `h(x)`
    /// (length `k`), and `obs_jacobian` the dense `k x m` matrix `dh/dx`.
    // One parameter per model ingredient; `!(x > t)` also rejects NaN.
    #[allow(clippy::too_many_arguments, clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(
        dim_state: usize,
        dim_obs: usize,
        delta: f64,
        drift: impl Fn(&DVector<f64>, i64) -> DVector<f64> + Send + Sync + 'static,
        diffusion: impl Fn(&DVector<f64>, i64) -> DVector<f64> + Send + Sync + 'static,
        obs_map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        obs_jacobian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        obs_noise: DVector<f64>,
    ) -> Result<Self> {
        if dim_state == 0 {
            return Err(FilterError::InvalidConfig("state dimension must be positive".into()));
        }
        if dim_obs > dim_state {
            return Err(FilterError::InvalidConfig(format!(
                "observation dimension {dim_obs} exceeds state dimension {dim_state}"
            )));
        }
        if !(delta > 0.0) {
            return Err(FilterError::InvalidConfig(format!("step delta must be positive, got {delta}")));
        }
        if obs_noise.len() != dim_obs {
            return Err(FilterError::InvalidConfig(format!(
                "obs_noise has length {}, expected {dim_obs}",
                obs_noise.len()
            )));
        }
        if obs_noise.iter().any(|q| !(*q > 0.0)) {
            return Err(FilterError::InvalidConfig("observation noise scales must be positive".into()));
        }
        Ok(Self {
            dim_state,
            dim_obs,
            delta,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            obs_map: Arc::new(obs_map),
            obs_jacobian: Arc::new(obs_jacobian),
            obs_noise,
            obs_linear: false,
            linear: None,
            clamp: None,
        })
    }

    /// Mark the observation Jacobian as state-independent.
    pub fn with_linear_obs(mut self) -> Self {
        self.obs_linear = true;
        self
    }

    /// Attach dense linear structure (implies a state-independent `H`).
    pub fn with_linear_parts(mut self, drift_matrix: DMatrix<f64>, obs_matrix: DMatrix<f64>) -> Self {
        self.linear = Some(LinearParts { drift_matrix, obs_matrix });
        self.obs_linear = true;
        self
    }

    /// Attach a state projection applied after every transition (e.g. floors
    /// keeping concentrations away from singular regions of the dynamics).
    pub fn with_clamp(mut self, clamp: impl Fn(&mut DVector<f64>) + Send + Sync + 'static) -> Self {
        self.clamp = Some(Arc::new(clamp));
        self
    }

    /// Rebuild this model with a different time step (same dynamics).
    pub fn with_delta(&self, delta: f64) -> Self {
        let mut m = self.clone();
        m.delta = delta;
        m
    }

    /// Drift rate `F(x, n)`.
    pub fn drift(&self, state: &DVector<f64>, time: i64) -> DVector<f64> {
        (self.drift)(state, time)
    }

    /// Diagonal of the diffusion scale `G(x, n)`.
    pub fn diffusion(&self, state: &DVector<f64>, time: i64) -> DVector<f64> {
        (self.diffusion)(state, time)
    }

    /// Observation map `h(x)`.
    pub fn obs_map(&self, state: &DVector<f64>) -> DVector<f64> {
        (self.obs_map)(state)
    }

    /// Observation Jacobian `H(x)`, dense `k x m`.
    pub fn obs_jacobian(&self, state: &DVector<f64>) -> DMatrix<f64> {
        (self.obs_jacobian)(state)
    }

    /// Mean of the one-step transition from `state`: `x + F(x, n) * delta`.
    pub fn prior_mean(&self, state: &DVector<f64>, time: i64) -> DVector<f64> {
        state + self.drift(state, time) * self.delta
    }

    /// Diagonal of the one-step transition covariance, `delta * G(x, n)^2`.
    ///
    /// Fails if any diffusion component vanishes: the transition density
    /// would be singular along that component.
    pub fn prior_cov_diag(&self, state: &DVector<f64>, time: i64) -> Result<DVector<f64>> {
        let g = self.diffusion(state, time);
        if g.iter().any(|gi| gi.abs() <= 0.0 || !gi.is_finite()) {
            return Err(FilterError::SingularCovariance(
                "diffusion has a zero or non-finite component".into(),
            ));
        }
        Ok(g.map(|gi| self.delta * gi * gi))
    }

    /// Diagonal of `Q^T Q` (squared observation noise scales).
    pub fn obs_noise_sq(&self) -> DVector<f64> {
        self.obs_noise.map(|q| q * q)
    }

    /// Apply the model's state projection, if any.
    pub fn apply_clamp(&self, state: &mut DVector<f64>) {
        if let Some(clamp) = &self.clamp {
            clamp(state);
        }
    }

    /// Return a copy of `state` projected onto the model's valid domain.
    ///
    /// Used for choosing linearization points: an iterate may wander outside
    /// the region where `h` (or the drift) is defined, while the model
    /// guarantees validity only on the projected set.
    pub fn projected(&self, state: &DVector<f64>) -> DVector<f64> {
        let mut s = state.clone();
        self.apply_clamp(&mut s);
        s
    }

    /// Whether the model carries a state projection.
    pub fn has_clamp(&self) -> bool {
        self.clamp.is_some()
    }
}

/// One step of the stochastic dynamics:
/// `state + F(state, n) * delta + sqrt(delta) * G(state, n) .* noise`.
///
/// `noise` is a standard Gaussian vector of length `m`. Pure function of its
/// inputs; any state projection is the caller's responsibility.
pub fn propagate(
    model: &StateSpaceModel,
    state: &DVector<f64>,
    time: i64,
    noise: &DVector<f64>,
) -> DVector<f64> {
    let sqrt_delta = model.delta.sqrt();
    let g = model.diffusion(state, time);
    let mut next = model.prior_mean(state, time);
    for i in 0..model.dim_state {
        next[i] += sqrt_delta * g[i] * noise[i];
    }
    next
}

/// Log observation likelihood up to its normalization constant:
/// `-(h(x) - b)^T (Q^T Q)^{-1} (h(x) - b) / 2`.
pub fn observe_likelihood_log(model: &StateSpaceModel, state: &DVector<f64>, obs: &DVector<f64>) -> f64 {
    let h = model.obs_map(state);
    let mut quad = 0.0;
    for r in 0..model.dim_obs {
        let innov = h[r] - obs[r];
        let q = model.obs_noise[r];
        quad += innov * innov / (q * q);
    }
    -0.5 * quad
}

/// Largest relative disagreement between `obs_jacobian` and central finite
/// differences of `obs_map`, over the given states. A model validation
/// helper: well-formed models stay below ~1e-5 at interior states.
pub fn obs_jacobian_fd_error(model: &StateSpaceModel, states: &[DVector<f64>], fd_step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in states {
        let jac = model.obs_jacobian(x);
        let scale = 1.0 + jac.amax();
        for c in 0..model.dim_state {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += fd_step;
            xm[c] -= fd_step;
            let hp = model.obs_map(&xp);
            let hm = model.obs_map(&xm);
            for r in 0..model.dim_obs {
                let fd = (hp[r] - hm[r]) / (2.0 * fd_step);
                worst = worst.max((fd - jac[(r, c)]).abs() / scale);
            }
        }
    }
    worst
}

/// A single observation slot in a run: `value` is meaningful only when
/// `present` is true (times without measurements keep a placeholder).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    /// Step index the observation refers to (1-based within a run).
    pub time_index: i64,
    /// Measured value `b` (length `k`).
    pub value: DVector<f64>,
    /// Whether a measurement exists at this time.
    pub present: bool,
}

impl ObservationRecord {
    /// An available measurement at `time_index`.
    pub fn present(time_index: i64, value: DVector<f64>) -> Self {
        Self { time_index, value, present: true }
    }

    /// A gap (no measurement) at `time_index`.
    pub fn absent(time_index: i64, dim_obs: usize) -> Self {
        Self { time_index, value: DVector::zeros(dim_obs), present: false }
    }
}

/// How many recent states a particle retains for smoothing steps.
pub const HISTORY_CAPACITY: usize = 8;

/// One weighted sample of the state posterior.
#[derive(Debug, Clone)]
pub struct Particle {
    /// Current state estimate `x_n`.
    pub state: DVector<f64>,
    /// Accumulated log-weight since the last resample (`-Phi + log|J|`
    /// increments for sampled filters; log-likelihood increments for SIR).
    pub log_weight: f64,
    /// Most recent past states, oldest first (`..., x_{n-2}, x_{n-1}`);
    /// excludes `state` itself. Bounded by [`HISTORY_CAPACITY`].
    pub history: VecDeque<DVector<f64>>,
    /// Index of the source particle in the most recent resample; own index
    /// if no resample has happened yet.
    pub ancestor: usize,
}

impl Particle {
    /// A fresh unit-weight particle at `state` with its own index as ancestor.
    pub fn new(state: DVector<f64>, index: usize) -> Self {
        Self { state, log_weight: 0.0, history: VecDeque::new(), ancestor: index }
    }

    /// Move to `new_state`, pushing the current state into history.
    pub fn advance(&mut self, new_state: DVector<f64>) {
        self.history.push_back(std::mem::replace(&mut self.state, new_state));
        while self.history.len() > HISTORY_CAPACITY {
            self.history.pop_front();
        }
    }

    /// The state `j` steps back (`j = 1` is the immediate predecessor).
    pub fn past(&self, j: usize) -> Option<&DVector<f64>> {
        if j == 0 || j > self.history.len() {
            return None;
        }
        Some(&self.history[self.history.len() - j])
    }

    /// Replace the state `j` steps back (used by backward smoothing).
    pub fn rewrite_past(&mut self, j: usize, state: DVector<f64>) {
        let len = self.history.len();
        assert!(j >= 1 && j <= len, "no history entry {j} steps back");
        self.history[len - j] = state;
    }
}

/// A weighted particle population at a common time index.
#[derive(Debug, Clone)]
pub struct Ensemble {
    /// The particles; at least one.
    pub particles: Vec<Particle>,
    /// Step index the ensemble currently sits at.
    pub time_index: i64,
}

impl Ensemble {
    /// An ensemble of `count` copies of `initial` at time 0, unit weights.
    pub fn from_initial_state(initial: &DVector<f64>, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(FilterError::InvalidConfig("ensemble must have at least one particle".into()));
        }
        let particles = (0..count).map(|i| Particle::new(initial.clone(), i)).collect();
        Ok(Self { particles, time_index: 0 })
    }

    /// Number of particles.
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    /// Whether the ensemble is empty (never true for constructed ensembles).
    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Current log-weights in particle order.
    pub fn log_weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }
}

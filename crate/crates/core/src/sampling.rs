//! Per-particle samplers.
//!
//! Each sampler maps a standard-normal draw `xi` onto a state (or pair of
//! states) with high probability under the relevant conditional density, by
//! repeatedly completing squares against a Gaussian reference:
//!
//! 1. linearize the observation map at the current iterate,
//! 2. collapse prior and linearized observation into a pseudo-Gaussian
//!    `(mean, Sigma, phi)` via [`complete_squares`],
//! 3. move to `mean + L xi` where `Sigma = L L'`,
//!
//! until successive iterates agree to tolerance. At the fixed point the
//! sample satisfies `xi' xi / 2 + phi = negative log kernel(X)` up to the
//! (quadratically small) final linearization error, so the particle weight
//! only needs `exp(-phi) |det dX/dxi|`.
//!
//! Three conditionals are covered: [`forward_step`] (one transition with an
//! observation at its end), [`backward_step`] (re-sampling a middle state
//! given both neighbors and its own observation), and [`sparse_step`]
//! (jointly sampling two states when only the later one is observed).
//! [`prior_step`] handles unobserved transitions with the same bookkeeping.

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::model::StateSpaceModel;
use crate::pseudo_gaussian::{
    chol_logdet, complete_squares, complete_squares_with_noise, solve_reference, NoiseCov,
    PseudoGaussian,
};

/// How the determinant of the sampling map enters the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JacobianMode {
    /// Differentiate the full map `xi -> X` numerically, column by column,
    /// re-running the iteration from the converged point (default). Exact
    /// up to the difference step even for nonlinear observation maps.
    #[default]
    FiniteDifference,
    /// Use the Cholesky factor of the converged reference covariance.
    /// Exact for linear observation maps, first-order otherwise.
    Linearized,
}

/// Where the linearization iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartMode {
    /// Start at the origin (default).
    #[default]
    Zero,
    /// Start at the one-step prediction. Useful when the origin lies far
    /// from (or outside) the domain the observation map is defined on.
    PriorMean,
}

/// Iteration controls shared by every sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    /// Relative tolerance on successive iterates (infinity norm).
    pub tol: f64,
    /// Maximum number of reference solves before giving up.
    pub max_iters: usize,
    /// Jacobian handling for models with nonlinear observations; linear
    /// models always use the (there exact) Cholesky determinant.
    pub jacobian_mode: JacobianMode,
    /// Step used by the finite-difference Jacobian.
    pub fd_step: f64,
    /// Iteration start point.
    pub start: StartMode,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100,
            jacobian_mode: JacobianMode::default(),
            fd_step: 1e-6,
            start: StartMode::default(),
        }
    }
}

/// Outcome of a single-state sampler.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// The sampled state.
    pub new_state: DVector<f64>,
    /// Scalar remainder of the completed squares; the weight carries
    /// `exp(-phi)`.
    pub phi: f64,
    /// `ln |det dX/dxi|` of the sampling map; the weight carries its exp.
    pub log_jac: f64,
    /// Linearization updates needed after the first solve (0 means the
    /// first solve was already self-consistent; linear maps need exactly 1).
    pub iters: usize,
    /// The reference draw that produced the sample.
    pub xi: DVector<f64>,
    /// Mean of the Gaussian the observation was folded into (for
    /// [`forward_step`]/[`prior_step`] the one-step prediction; for
    /// [`backward_step`] the two-leg product mean at convergence).
    pub prior_mean: DVector<f64>,
    /// Covariance diagonal matching `prior_mean`.
    pub prior_cov_diag: DVector<f64>,
    /// The converged pseudo-Gaussian (reference mean, factor, remainder).
    pub pg: PseudoGaussian,
}

/// Outcome of the two-state sampler used across observation gaps.
#[derive(Debug, Clone)]
pub struct SparseStepResult {
    /// Sample of the unobserved earlier state.
    pub state_n: DVector<f64>,
    /// Sample of the observed later state.
    pub state_np1: DVector<f64>,
    /// Remainder of the collapsed earlier block; the later block leaves
    /// none behind (its remainder is already accounted for here).
    pub phi: f64,
    /// `ln |det|` of the joint map `(xi_n, xi_np1) -> (X_n, X_np1)`.
    pub log_jac: f64,
    /// Linearization updates needed after the first joint solve.
    pub iters: usize,
    /// Reference draw for the earlier state.
    pub xi_n: DVector<f64>,
    /// Reference draw for the later state.
    pub xi_np1: DVector<f64>,
}

fn start_point(cfg: &IterationConfig, prediction: &DVector<f64>) -> DVector<f64> {
    match cfg.start {
        StartMode::Zero => DVector::zeros(prediction.len()),
        StartMode::PriorMean => prediction.clone(),
    }
}

fn ensure_finite(state: &DVector<f64>, solve: usize) -> Result<()> {
    if state.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::Diverged(format!(
            "iterate became non-finite at solve {solve}"
        )));
    }
    Ok(())
}

fn close_enough(next: &DVector<f64>, current: &DVector<f64>, tol: f64) -> bool {
    (next - current).amax() <= tol * (1.0 + current.amax())
}

/// Number of plain solves before oscillation damping may engage.
const DAMP_AFTER_SOLVES: usize = 10;

/// Halves the linearization update when the iterate sequence oscillates.
///
/// A strongly curved observation map (e.g. a log readout near a state
/// floor) can make the plain update bounce between two points a fixed
/// distance apart forever; averaging with the previous point keeps every
/// fixed point but turns that two-cycle into a contraction. The halving is
/// applied only when successive update directions reverse — slowly but
/// monotonically converging sequences are left at full step, since halving
/// those doubles their iteration count — and never before
/// `DAMP_AFTER_SOLVES`, so the one-solve behavior for linear observations
/// is untouched.
struct StallDamper {
    prev_delta: Option<DVector<f64>>,
}

impl StallDamper {
    fn new() -> Self {
        Self { prev_delta: None }
    }

    fn advance(
        &mut self,
        current: DVector<f64>,
        next: &DVector<f64>,
        solve: usize,
    ) -> DVector<f64> {
        let delta = next - &current;
        let reversed = self.prev_delta.as_ref().is_some_and(|prev| delta.dot(prev) < 0.0);
        self.prev_delta = Some(delta);
        if reversed && solve >= DAMP_AFTER_SOLVES {
            (current + next) * 0.5
        } else {
            next.clone()
        }
    }
}

/// Linearized observation target at `lin`: `b - h(lin) + H lin`, computed as
/// `b - (h(lin) - H lin)` so that exactly linear maps leave `b` untouched
/// bit for bit (the gap `h(lin) - H lin` is exactly zero then).
fn linearized_target(
    model: &StateSpaceModel,
    hmat: &DMatrix<f64>,
    lin: &DVector<f64>,
    obs: &DVector<f64>,
) -> DVector<f64> {
    let gap = model.obs_map(lin) - hmat * lin;
    obs - gap
}

fn log_abs_det(jac: DMatrix<f64>) -> Result<f64> {
    let det = jac.lu().determinant();
    if !det.is_finite() || det == 0.0 {
        return Err(FilterError::SingularJacobian(format!(
            "sampling map determinant is {det}"
        )));
    }
    Ok(det.abs().ln())
}

// ---------------------------------------------------------------------------
// Forward step: sample X^{n+1} ~ p(x | X^n, b^{n+1}).
// ---------------------------------------------------------------------------

fn iterate_forward(
    model: &StateSpaceModel,
    prior_mean: &DVector<f64>,
    prior_cov_diag: &DVector<f64>,
    obs: &DVector<f64>,
    xi: &DVector<f64>,
    cfg: &IterationConfig,
    start: &DVector<f64>,
) -> Result<(DVector<f64>, PseudoGaussian, usize)> {
    let obs_noise_sq = model.obs_noise_sq();
    let mut current = start.clone();
    let mut residual = f64::INFINITY;
    let mut damper = StallDamper::new();
    for solve in 1..=cfg.max_iters {
        let lin = model.projected(&current);
        let hmat = model.obs_jacobian(&lin);
        let z = linearized_target(model, &hmat, &lin, obs);
        let pg = complete_squares(prior_mean, prior_cov_diag, &hmat, &obs_noise_sq, &z)?;
        let next = solve_reference(&pg, xi);
        ensure_finite(&next, solve)?;
        residual = (&next - &current).amax();
        if close_enough(&next, &current, cfg.tol) {
            return Ok((next, pg, solve - 1));
        }
        current = damper.advance(current, &next, solve);
    }
    Err(FilterError::NonConvergence { iters: cfg.max_iters, residual })
}

fn fd_forward_logdet(
    model: &StateSpaceModel,
    prior_mean: &DVector<f64>,
    prior_cov_diag: &DVector<f64>,
    obs: &DVector<f64>,
    xi: &DVector<f64>,
    converged: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<f64> {
    let m = model.dim_state;
    let mut jac = DMatrix::zeros(m, m);
    for col in 0..m {
        let mut shifted_xi = xi.clone();
        shifted_xi[col] += cfg.fd_step;
        let (shifted, _, _) =
            iterate_forward(model, prior_mean, prior_cov_diag, obs, &shifted_xi, cfg, converged)?;
        jac.set_column(col, &((shifted - converged) / cfg.fd_step));
    }
    log_abs_det(jac)
}

/// Sample the next state given the previous one and an observation of the
/// next. `time` is the index of `prev_state`; `obs` is taken one step later.
pub fn forward_step(
    model: &StateSpaceModel,
    prev_state: &DVector<f64>,
    time: i64,
    obs: &DVector<f64>,
    xi: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<StepResult> {
    let base = model.projected(prev_state);
    let prior_mean = model.prior_mean(&base, time);
    let prior_cov_diag = model.prior_cov_diag(&base, time)?;
    let start = start_point(cfg, &prior_mean);
    let (new_state, pg, iters) =
        iterate_forward(model, &prior_mean, &prior_cov_diag, obs, xi, cfg, &start)?;
    let log_jac = if model.obs_linear || cfg.jacobian_mode == JacobianMode::Linearized {
        chol_logdet(&pg)
    } else {
        fd_forward_logdet(model, &prior_mean, &prior_cov_diag, obs, xi, &new_state, cfg)?
    };
    let phi = pg.phi;
    Ok(StepResult { new_state, phi, log_jac, iters, xi: xi.clone(), prior_mean, prior_cov_diag, pg })
}

/// Recompute the log Jacobian determinant of a forward sampling map,
/// honoring `cfg.jacobian_mode` exactly (no linear-model shortcut). Lets a
/// caller cross-check the two routes against each other.
pub fn jacobian_logdet(
    model: &StateSpaceModel,
    result: &StepResult,
    obs: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<f64> {
    match cfg.jacobian_mode {
        JacobianMode::Linearized => Ok(chol_logdet(&result.pg)),
        JacobianMode::FiniteDifference => fd_forward_logdet(
            model,
            &result.prior_mean,
            &result.prior_cov_diag,
            obs,
            &result.xi,
            &result.new_state,
            cfg,
        ),
    }
}

/// Sample an unobserved transition: the posterior is the prior itself, so
/// the reference solve is direct (`phi = 0`, no iteration).
pub fn prior_step(
    model: &StateSpaceModel,
    prev_state: &DVector<f64>,
    time: i64,
    xi: &DVector<f64>,
) -> Result<StepResult> {
    let base = model.projected(prev_state);
    let prior_mean = model.prior_mean(&base, time);
    let prior_cov_diag = model.prior_cov_diag(&base, time)?;
    let no_obs_matrix = DMatrix::zeros(0, model.dim_state);
    let empty = DVector::zeros(0);
    let pg = complete_squares(&prior_mean, &prior_cov_diag, &no_obs_matrix, &empty, &empty)?;
    let new_state = solve_reference(&pg, xi);
    ensure_finite(&new_state, 1)?;
    let log_jac = chol_logdet(&pg);
    let phi = pg.phi;
    Ok(StepResult { new_state, phi, log_jac, iters: 0, xi: xi.clone(), prior_mean, prior_cov_diag, pg })
}

// ---------------------------------------------------------------------------
// Backward step: re-sample X^n ~ p(x | X^{n-1}, X^{n+1}, b^n).
// ---------------------------------------------------------------------------

struct BackwardIterate {
    state: DVector<f64>,
    pg: PseudoGaussian,
    phi_legs: f64,
    combined_mean: DVector<f64>,
    combined_cov: DVector<f64>,
    iters: usize,
}

#[allow(clippy::too_many_arguments)]
fn iterate_backward(
    model: &StateSpaceModel,
    leg_mean: &DVector<f64>,
    leg_cov: &DVector<f64>,
    state_after: &DVector<f64>,
    obs: &DVector<f64>,
    time_mid: i64,
    xi: &DVector<f64>,
    cfg: &IterationConfig,
    start: &DVector<f64>,
) -> Result<BackwardIterate> {
    let m = model.dim_state;
    let obs_noise_sq = model.obs_noise_sq();
    let mut current = start.clone();
    let mut residual = f64::INFINITY;
    let mut damper = StallDamper::new();
    for solve in 1..=cfg.max_iters {
        let lin = model.projected(&current);
        // Second leg, with drift and diffusion frozen at the iterate:
        // X^{n+1} = X + F(lin) delta + noise pins X near state_after - F delta.
        let back_mean = state_after - model.drift(&lin, time_mid) * model.delta;
        let back_cov = model.prior_cov_diag(&lin, time_mid)?;
        // Product of the two Gaussian legs.
        let mut combined_mean = DVector::zeros(m);
        let mut combined_cov = DVector::zeros(m);
        let mut phi_legs = 0.0;
        for i in 0..m {
            let (ai, bi) = (leg_cov[i], back_cov[i]);
            combined_cov[i] = ai * bi / (ai + bi);
            combined_mean[i] = (bi * leg_mean[i] + ai * back_mean[i]) / (ai + bi);
            let gap = leg_mean[i] - back_mean[i];
            phi_legs += gap * gap / (2.0 * (ai + bi));
        }
        let hmat = model.obs_jacobian(&lin);
        let z = linearized_target(model, &hmat, &lin, obs);
        let pg = complete_squares(&combined_mean, &combined_cov, &hmat, &obs_noise_sq, &z)?;
        let next = solve_reference(&pg, xi);
        ensure_finite(&next, solve)?;
        residual = (&next - &current).amax();
        if close_enough(&next, &current, cfg.tol) {
            return Ok(BackwardIterate {
                state: next,
                pg,
                phi_legs,
                combined_mean,
                combined_cov,
                iters: solve - 1,
            });
        }
        current = damper.advance(current, &next, solve);
    }
    Err(FilterError::NonConvergence { iters: cfg.max_iters, residual })
}

#[allow(clippy::too_many_arguments)]
fn fd_backward_logdet(
    model: &StateSpaceModel,
    leg_mean: &DVector<f64>,
    leg_cov: &DVector<f64>,
    state_after: &DVector<f64>,
    obs: &DVector<f64>,
    time_mid: i64,
    xi: &DVector<f64>,
    converged: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<f64> {
    let m = model.dim_state;
    let mut jac = DMatrix::zeros(m, m);
    for col in 0..m {
        let mut shifted_xi = xi.clone();
        shifted_xi[col] += cfg.fd_step;
        let it = iterate_backward(
            model, leg_mean, leg_cov, state_after, obs, time_mid, &shifted_xi, cfg, converged,
        )?;
        jac.set_column(col, &((it.state - converged) / cfg.fd_step));
    }
    log_abs_det(jac)
}

/// Re-sample a middle state given both its neighbors and its own
/// observation. `state_before` sits at `time_mid - 1`, `state_after` at
/// `time_mid + 1`, and `obs` was taken at `time_mid`. The returned
/// `prior_mean`/`prior_cov_diag` hold the product of the two transition
/// legs at convergence, and `phi` includes the legs' own mismatch.
pub fn backward_step(
    model: &StateSpaceModel,
    state_before: &DVector<f64>,
    state_after: &DVector<f64>,
    obs: &DVector<f64>,
    time_mid: i64,
    xi: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<StepResult> {
    let base = model.projected(state_before);
    let leg_mean = model.prior_mean(&base, time_mid - 1);
    let leg_cov = model.prior_cov_diag(&base, time_mid - 1)?;
    let start = start_point(cfg, &leg_mean);
    let it = iterate_backward(
        model, &leg_mean, &leg_cov, state_after, obs, time_mid, xi, cfg, &start,
    )?;
    let log_jac = if model.obs_linear || cfg.jacobian_mode == JacobianMode::Linearized {
        chol_logdet(&it.pg)
    } else {
        fd_backward_logdet(
            model, &leg_mean, &leg_cov, state_after, obs, time_mid, xi, &it.state, cfg,
        )?
    };
    Ok(StepResult {
        new_state: it.state,
        phi: it.phi_legs + it.pg.phi,
        log_jac,
        iters: it.iters,
        xi: xi.clone(),
        prior_mean: it.combined_mean,
        prior_cov_diag: it.combined_cov,
        pg: it.pg,
    })
}

// ---------------------------------------------------------------------------
// Sparse step: sample (X^n, X^{n+1}) ~ p(x, y | X^{n-1}, b^{n+1}) jointly,
// when X^n itself carries no observation.
// ---------------------------------------------------------------------------

struct SparseIterate {
    state_n: DVector<f64>,
    state_np1: DVector<f64>,
    pg_n: PseudoGaussian,
    pg_np1: PseudoGaussian,
    iters: usize,
}

#[allow(clippy::too_many_arguments)]
fn iterate_sparse(
    model: &StateSpaceModel,
    leg_mean: &DVector<f64>,
    leg_cov: &DVector<f64>,
    obs: &DVector<f64>,
    time_n: i64,
    xi_n: &DVector<f64>,
    xi_np1: &DVector<f64>,
    cfg: &IterationConfig,
    start_n: &DVector<f64>,
    start_np1: &DVector<f64>,
) -> Result<SparseIterate> {
    let obs_noise_sq = model.obs_noise_sq();
    let mut cur_n = start_n.clone();
    let mut cur_np1 = start_np1.clone();
    let mut residual = f64::INFINITY;
    let mut damper_n = StallDamper::new();
    let mut damper_np1 = StallDamper::new();
    for solve in 1..=cfg.max_iters {
        // Linearize the observation at the later iterate, the transition at
        // the earlier one.
        let lin_np1 = model.projected(&cur_np1);
        let hmat = model.obs_jacobian(&lin_np1);
        let z = linearized_target(model, &hmat, &lin_np1, obs);
        let lin_n = model.projected(&cur_n);
        let drift_now = model.drift(&lin_n, time_n) * model.delta;
        let mid_cov = model.prior_cov_diag(&lin_n, time_n)?;
        // Fold the later block into the earlier one: seen from X^n, the
        // observation reads z - H F delta through the map H with noise
        // H B H' + Q^2 (transition noise pushed through the observation).
        let folded_noise = &hmat * DMatrix::from_diagonal(&mid_cov) * hmat.transpose()
            + DMatrix::from_diagonal(&obs_noise_sq);
        let folded_target = &z - &hmat * &drift_now;
        let pg_n = complete_squares_with_noise(
            leg_mean,
            leg_cov,
            &hmat,
            NoiseCov::Dense(&folded_noise),
            &folded_target,
        )?;
        let next_n = solve_reference(&pg_n, xi_n);
        ensure_finite(&next_n, solve)?;
        // Then the later state, conditioned on the fresh earlier sample.
        let mid_mean = &next_n + &drift_now;
        let pg_np1 = complete_squares(&mid_mean, &mid_cov, &hmat, &obs_noise_sq, &z)?;
        let next_np1 = solve_reference(&pg_np1, xi_np1);
        ensure_finite(&next_np1, solve)?;
        let res_n = (&next_n - &cur_n).amax();
        let res_np1 = (&next_np1 - &cur_np1).amax();
        residual = res_n.max(res_np1);
        if close_enough(&next_n, &cur_n, cfg.tol) && close_enough(&next_np1, &cur_np1, cfg.tol) {
            return Ok(SparseIterate {
                state_n: next_n,
                state_np1: next_np1,
                pg_n,
                pg_np1,
                iters: solve - 1,
            });
        }
        cur_n = damper_n.advance(cur_n, &next_n, solve);
        cur_np1 = damper_np1.advance(cur_np1, &next_np1, solve);
    }
    Err(FilterError::NonConvergence { iters: cfg.max_iters, residual })
}

#[allow(clippy::too_many_arguments)]
fn fd_sparse_logdet(
    model: &StateSpaceModel,
    leg_mean: &DVector<f64>,
    leg_cov: &DVector<f64>,
    obs: &DVector<f64>,
    time_n: i64,
    xi_n: &DVector<f64>,
    xi_np1: &DVector<f64>,
    conv_n: &DVector<f64>,
    conv_np1: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<f64> {
    let m = model.dim_state;
    let mut jac = DMatrix::zeros(2 * m, 2 * m);
    for col in 0..2 * m {
        let mut shifted_n = xi_n.clone();
        let mut shifted_np1 = xi_np1.clone();
        if col < m {
            shifted_n[col] += cfg.fd_step;
        } else {
            shifted_np1[col - m] += cfg.fd_step;
        }
        let it = iterate_sparse(
            model, leg_mean, leg_cov, obs, time_n, &shifted_n, &shifted_np1, cfg, conv_n, conv_np1,
        )?;
        let col_n = (it.state_n - conv_n) / cfg.fd_step;
        let col_np1 = (it.state_np1 - conv_np1) / cfg.fd_step;
        for row in 0..m {
            jac[(row, col)] = col_n[row];
            jac[(m + row, col)] = col_np1[row];
        }
    }
    log_abs_det(jac)
}

/// Jointly sample an unobserved state and its observed successor, given the
/// state one step before the pair. `time_n` indexes the unobserved state;
/// `obs` was taken at `time_n + 1`. The joint map is block-triangular at
/// convergence — the earlier sample feeds the later block — so the weight
/// carries the earlier block's remainder `phi` and the product of both
/// block determinants.
pub fn sparse_step(
    model: &StateSpaceModel,
    state_before: &DVector<f64>,
    time_n: i64,
    obs: &DVector<f64>,
    xi_n: &DVector<f64>,
    xi_np1: &DVector<f64>,
    cfg: &IterationConfig,
) -> Result<SparseStepResult> {
    let base = model.projected(state_before);
    let leg_mean = model.prior_mean(&base, time_n - 1);
    let leg_cov = model.prior_cov_diag(&base, time_n - 1)?;
    let start_n = start_point(cfg, &leg_mean);
    let start_np1 = match cfg.start {
        StartMode::Zero => DVector::zeros(model.dim_state),
        StartMode::PriorMean => {
            let lin = model.projected(&leg_mean);
            model.prior_mean(&lin, time_n)
        }
    };
    let it = iterate_sparse(
        model, &leg_mean, &leg_cov, obs, time_n, xi_n, xi_np1, cfg, &start_n, &start_np1,
    )?;
    let log_jac = if model.obs_linear || cfg.jacobian_mode == JacobianMode::Linearized {
        chol_logdet(&it.pg_n) + chol_logdet(&it.pg_np1)
    } else {
        fd_sparse_logdet(
            model,
            &leg_mean,
            &leg_cov,
            obs,
            time_n,
            xi_n,
            xi_np1,
            &it.state_n,
            &it.state_np1,
            cfg,
        )?
    };
    Ok(SparseStepResult {
        state_n: it.state_n,
        state_np1: it.state_np1,
        phi: it.pg_n.phi,
        log_jac,
        iters: it.iters,
        xi_n: xi_n.clone(),
        xi_np1: xi_np1.clone(),
    })
}

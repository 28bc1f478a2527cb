//! The experiment driver: runs one filter over synthetic twin data.
//!
//! [`run_filter`] owns the whole loop: it generates a truth trajectory and
//! observations from the model, advances an ensemble with the chosen filter,
//! accumulates log-weights, applies the resample policy, and reports
//! per-step ensemble statistics plus an overall RMSE against the truth.
//!
//! Step dispatch for the implicit filters follows the observation pattern:
//! a step with a measurement runs a full posterior-sampling update; a gap
//! step whose successor is observed runs the joint two-step sampler and
//! emits two metric rows at once; a gap with no upcoming measurement falls
//! back to sampling the transition density alone. A forward update that
//! fails to converge is retried once as a pair of half-length steps before
//! the run fails.
//!
//! Weight increments are `-phi + log|J|` for every sampling operation. The
//! leading Gaussian normalization constants these omit are shared by all
//! particles performing the same operation at the same step, so they cancel
//! in normalization; only the half-step retry mixes operations within a
//! step, and it adds the explicit covariance-ratio correction needed to
//! stay on the common scale.
//!
//! Every random draw comes from a counter-based substream keyed by
//! `(master_seed, step, particle, role)`, so results are bitwise identical
//! across repeat runs and across worker-thread counts.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::baselines::sir_step;
use crate::error::{FilterError, Result};
use crate::model::{Ensemble, ObservationRecord, Particle, StateSpaceModel};
use crate::models::synth_twin_data;
use crate::resample::{
    distinct_count, normalize_log_weights, resample, resample_subsets, should_resample,
    stratified_thetas, ResampleMode, ResamplePolicy,
};
use crate::rng::{rng_substream, standard_normal_vector, uniforms_unit_right_closed, StreamRole};
use crate::sampling::{backward_step, forward_step, prior_step, sparse_step, IterationConfig};

/// Which filter the driver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterKind {
    /// Implicit particle filter: direct posterior sampling per step.
    #[default]
    Implicit,
    /// Implicit filter plus a one-step backward smoothing pass: after each
    /// observed update, the previous state is redrawn conditioned on its
    /// two neighbors and the measurement it carries.
    ImplicitBackward,
    /// Standard sampling-importance-resampling baseline: particles move by
    /// the transition density and are weighted by the likelihood.
    Sir,
}

/// Which steps carry measurements.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum ObsSchedule {
    /// A measurement at every step.
    #[default]
    Every,
    /// Measurements at steps `k, 2k, 3k, ...` only.
    EveryKth(i64),
    /// Measurements exactly at the listed step indices (1-based).
    Indices(Vec<i64>),
}


impl ObsSchedule {
    /// The sorted, deduplicated list of observed steps within `1..=steps`.
    pub fn expand(&self, steps: i64) -> Vec<i64> {
        match self {
            ObsSchedule::Every => (1..=steps).collect(),
            ObsSchedule::EveryKth(k) => (1..=steps).filter(|n| n % k == 0).collect(),
            ObsSchedule::Indices(list) => {
                let mut v: Vec<i64> =
                    list.iter().copied().filter(|n| (1..=steps).contains(n)).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

/// Complete description of one filtering run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Filter to run.
    pub filter: FilterKind,
    /// Ensemble size M (at least 1).
    pub particles: usize,
    /// Number of assimilation steps (0 yields an empty run).
    pub steps: i64,
    /// Which steps are observed.
    pub obs_schedule: ObsSchedule,
    /// When and how to resample.
    pub resample: ResamplePolicy,
    /// Iteration controls for the implicit samplers.
    pub iteration: IterationConfig,
    /// Seed from which every random substream in the run derives.
    pub master_seed: u64,
    /// Worker threads for the per-particle loops (results are identical
    /// for any count).
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            filter: FilterKind::Implicit,
            particles: 100,
            steps: 50,
            obs_schedule: ObsSchedule::Every,
            resample: ResamplePolicy::default(),
            iteration: IterationConfig::default(),
            master_seed: 0,
            workers: 1,
        }
    }
}

/// Ensemble statistics recorded after one step's weight update, before
/// that step's resample (so `max_weight` reflects the raw update).
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// Step index (1-based).
    pub time_index: i64,
    /// Weighted ensemble mean.
    pub ens_mean: DVector<f64>,
    /// Weighted ensemble standard deviation, per component.
    pub ens_std: DVector<f64>,
    /// Distinct ancestors surviving this step's resample; equals the
    /// ensemble size on steps where no resample ran.
    pub distinct_count: usize,
    /// Largest normalized weight before resampling.
    pub max_weight: f64,
    /// Mean per-particle iteration count for the step's sampling operation
    /// (zero for transition-only and baseline steps).
    pub iters_mean: f64,
}

/// Everything a run produces: per-step statistics, the synthetic truth and
/// observations it assimilated, and the RMSE of the ensemble mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// One row per step, in time order.
    pub steps: Vec<StepMetrics>,
    /// Root-mean-square error of the weighted ensemble mean against the
    /// truth, averaged over all steps and components (0 for an empty run).
    pub rmse: f64,
    /// Truth trajectory, `truth[n]` is the state at step n (index 0 is the
    /// initial condition).
    pub truth: Vec<DVector<f64>>,
    /// Observation slots for steps `1..=steps`.
    pub observations: Vec<ObservationRecord>,
}

/// Run one filter over freshly generated twin data.
///
/// The truth and observations derive from `master_seed` through substreams
/// disjoint from every filter stream, so different filters given the same
/// model, initial state, and seed assimilate identical data.
pub fn run_filter(
    model: &StateSpaceModel,
    initial: &DVector<f64>,
    cfg: &RunConfig,
) -> Result<RunMetrics> {
    validate(model, initial, cfg)?;
    let obs_times = cfg.obs_schedule.expand(cfg.steps);
    let data = synth_twin_data(model, initial, cfg.steps, &obs_times, cfg.master_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| FilterError::InvalidConfig(format!("worker pool: {e}")))?;

    let mut ensemble = Ensemble::from_initial_state(&model.projected(initial), cfg.particles)?;
    let mut rows: Vec<StepMetrics> = Vec::with_capacity(cfg.steps.max(0) as usize);

    let mut n = 1i64;
    while n <= cfg.steps {
        // Fresh lineage labels so distinct_count reflects this step only.
        for (p, particle) in ensemble.particles.iter_mut().enumerate() {
            particle.ancestor = p;
        }
        let here = data.observation_at(n).expect("twin data covers the run");
        let next_present = data.observation_at(n + 1).is_some_and(|r| r.present);

        match cfg.filter {
            FilterKind::Sir => {
                let iters = pool.install(|| sir_sweep(model, &mut ensemble, n, here, cfg))?;
                close_out_step(&mut ensemble, &mut rows, n, &iters, cfg)?;
                n += 1;
            }
            FilterKind::Implicit | FilterKind::ImplicitBackward => {
                if here.present {
                    let prev_obs = if cfg.filter == FilterKind::ImplicitBackward {
                        data.observation_at(n - 1).filter(|r| r.present)
                    } else {
                        None
                    };
                    let iters =
                        pool.install(|| forward_sweep(model, &mut ensemble, n, here, prev_obs, cfg))?;
                    close_out_step(&mut ensemble, &mut rows, n, &iters, cfg)?;
                    n += 1;
                } else if next_present {
                    let ahead = data.observation_at(n + 1).expect("checked above");
                    let iters = pool.install(|| pair_sweep(model, &mut ensemble, n, ahead, cfg))?;
                    // Row for the unobserved step: statistics of the first
                    // state of the pair under the post-update weights. No
                    // resample splits the pair, so its lineage is intact.
                    let probs = normalize_log_weights(&ensemble.log_weights())?;
                    let (mean, std) = stats_by(&ensemble, &probs, |part| {
                        part.past(1).expect("pair pushed two states")
                    });
                    let max_weight = probs.iter().cloned().fold(0.0, f64::max);
                    rows.push(StepMetrics {
                        time_index: n,
                        ens_mean: mean,
                        ens_std: std,
                        distinct_count: ensemble.len(),
                        max_weight,
                        iters_mean: 0.0,
                    });
                    close_out_step(&mut ensemble, &mut rows, n + 1, &iters, cfg)?;
                    n += 2;
                } else {
                    let iters = pool.install(|| prior_sweep(model, &mut ensemble, n, cfg))?;
                    close_out_step(&mut ensemble, &mut rows, n, &iters, cfg)?;
                    n += 1;
                }
            }
        }
    }

    let rmse = compute_rmse(&rows, &data.truth);
    Ok(RunMetrics { steps: rows, rmse, truth: data.truth, observations: data.observations })
}

// `!(x > t)` (rather than `x <= t`) also rejects NaN values.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn validate(model: &StateSpaceModel, initial: &DVector<f64>, cfg: &RunConfig) -> Result<()> {
    if initial.len() != model.dim_state {
        return Err(FilterError::InvalidConfig(format!(
            "initial state has {} components, model expects {}",
            initial.len(),
            model.dim_state
        )));
    }
    if cfg.particles == 0 {
        return Err(FilterError::InvalidConfig("particles must be at least 1".into()));
    }
    if cfg.steps < 0 {
        return Err(FilterError::InvalidConfig("steps must be nonnegative".into()));
    }
    if cfg.workers == 0 {
        return Err(FilterError::InvalidConfig("workers must be at least 1".into()));
    }
    if let ObsSchedule::EveryKth(k) = cfg.obs_schedule {
        if k < 1 {
            return Err(FilterError::InvalidConfig("observation stride must be at least 1".into()));
        }
    }
    if let Some(s) = cfg.resample.subset_size {
        if s == 0 {
            return Err(FilterError::InvalidConfig("subset_size must be at least 1".into()));
        }
    }
    if let ResampleMode::WeightRatio { limit } = cfg.resample.mode {
        if !(limit > 1.0) {
            return Err(FilterError::InvalidConfig("weight-ratio limit must exceed 1".into()));
        }
    }
    Ok(())
}

/// One observed implicit-filter step for every particle, plus the optional
/// backward smoothing pass. Returns per-particle iteration counts.
fn forward_sweep(
    model: &StateSpaceModel,
    ensemble: &mut Ensemble,
    n: i64,
    obs: &ObservationRecord,
    prev_obs: Option<&ObservationRecord>,
    cfg: &RunConfig,
) -> Result<Vec<usize>> {
    let m = model.dim_state;
    let seed = cfg.master_seed;
    let iter_cfg = cfg.iteration;
    ensemble
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(p, particle)| -> Result<usize> {
            let mut rng = rng_substream(seed, n, p, StreamRole::Xi);
            let xi = standard_normal_vector(&mut rng, m);
            let (new_state, increment, iters) =
                match forward_step(model, &particle.state, n - 1, &obs.value, &xi, &iter_cfg) {
                    Ok(r) => (r.new_state, -r.phi + r.log_jac, r.iters),
                    Err(FilterError::NonConvergence { .. }) => {
                        halved_pair_retry(model, &particle.state, n, &obs.value, p, seed, &iter_cfg)
                            .map_err(|e| e.at(n, p))?
                    }
                    Err(e) => return Err(e.at(n, p)),
                };
            let mut clamped = new_state;
            model.apply_clamp(&mut clamped);
            particle.advance(clamped);
            particle.log_weight += increment;
            if let Some(rec) = prev_obs {
                if let Some(prevprev) = particle.past(2).cloned() {
                    let mut brng = rng_substream(seed, n, p, StreamRole::XiBackward);
                    let bxi = standard_normal_vector(&mut brng, m);
                    let back = backward_step(
                        model,
                        &prevprev,
                        &particle.state,
                        &rec.value,
                        n - 1,
                        &bxi,
                        &iter_cfg,
                    )
                    .map_err(|e| e.at(n, p))?;
                    let mut corrected = back.new_state;
                    model.apply_clamp(&mut corrected);
                    particle.rewrite_past(1, corrected);
                    particle.log_weight += -back.phi + back.log_jac;
                }
            }
            Ok(iters)
        })
        .collect()
}

/// Retry a non-converged forward update as a joint pair of half-length
/// steps. The midpoint state is discarded; only the endpoint advances the
/// particle. Because the rest of the ensemble took a single full step, the
/// increment adds the log-ratio of the full-step transition covariance to
/// the two half-step covariances, which the shared `-phi + log|J|`
/// convention would otherwise leave unaccounted for.
fn halved_pair_retry(
    model: &StateSpaceModel,
    prev_state: &DVector<f64>,
    n: i64,
    obs: &DVector<f64>,
    particle: usize,
    seed: u64,
    iter_cfg: &IterationConfig,
) -> Result<(DVector<f64>, f64, usize)> {
    let m = model.dim_state;
    let half = model.with_delta(model.delta / 2.0);
    let mut rng = rng_substream(seed, n, particle, StreamRole::XiPair);
    let xi_mid = standard_normal_vector(&mut rng, m);
    let xi_end = standard_normal_vector(&mut rng, m);
    let pair = sparse_step(&half, prev_state, n, obs, &xi_mid, &xi_end, iter_cfg)?;

    let base = model.projected(prev_state);
    let full_cov = model.prior_cov_diag(&base, n - 1)?;
    let first_half = half.prior_cov_diag(&base, n - 1)?;
    let mid = half.projected(&pair.state_n);
    let second_half = half.prior_cov_diag(&mid, n)?;
    let mut gauge = 0.0;
    for i in 0..m {
        gauge += 0.5 * (full_cov[i].ln() - first_half[i].ln() - second_half[i].ln());
    }
    Ok((pair.state_np1, -pair.phi + pair.log_jac + gauge, pair.iters))
}

/// One joint two-step update (unobserved step `n`, observed step `n + 1`)
/// for every particle. Both sampled states advance the particle.
fn pair_sweep(
    model: &StateSpaceModel,
    ensemble: &mut Ensemble,
    n: i64,
    obs_next: &ObservationRecord,
    cfg: &RunConfig,
) -> Result<Vec<usize>> {
    let m = model.dim_state;
    let seed = cfg.master_seed;
    let iter_cfg = cfg.iteration;
    ensemble
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(p, particle)| -> Result<usize> {
            let mut rng = rng_substream(seed, n, p, StreamRole::XiPair);
            let xi_n = standard_normal_vector(&mut rng, m);
            let xi_np1 = standard_normal_vector(&mut rng, m);
            let pair =
                sparse_step(model, &particle.state, n, &obs_next.value, &xi_n, &xi_np1, &iter_cfg)
                    .map_err(|e| e.at(n, p))?;
            let mut mid = pair.state_n;
            model.apply_clamp(&mut mid);
            particle.advance(mid);
            let mut end = pair.state_np1;
            model.apply_clamp(&mut end);
            particle.advance(end);
            particle.log_weight += -pair.phi + pair.log_jac;
            Ok(pair.iters)
        })
        .collect()
}

/// One transition-density sampling step (no measurement anywhere ahead)
/// for every particle.
fn prior_sweep(
    model: &StateSpaceModel,
    ensemble: &mut Ensemble,
    n: i64,
    cfg: &RunConfig,
) -> Result<Vec<usize>> {
    let m = model.dim_state;
    let seed = cfg.master_seed;
    ensemble
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(p, particle)| -> Result<usize> {
            let mut rng = rng_substream(seed, n, p, StreamRole::Xi);
            let xi = standard_normal_vector(&mut rng, m);
            let r = prior_step(model, &particle.state, n - 1, &xi).map_err(|e| e.at(n, p))?;
            let mut clamped = r.new_state;
            model.apply_clamp(&mut clamped);
            particle.advance(clamped);
            particle.log_weight += -r.phi + r.log_jac;
            Ok(0)
        })
        .collect()
}

/// One baseline step for every particle: propagate by the transition
/// density, weight by the likelihood where a measurement exists.
fn sir_sweep(
    model: &StateSpaceModel,
    ensemble: &mut Ensemble,
    n: i64,
    obs: &ObservationRecord,
    cfg: &RunConfig,
) -> Result<Vec<usize>> {
    let m = model.dim_state;
    let seed = cfg.master_seed;
    ensemble
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(p, particle)| -> Result<usize> {
            let mut rng = rng_substream(seed, n, p, StreamRole::SirProposal);
            let noise = standard_normal_vector(&mut rng, m);
            let obs_value = obs.present.then_some(&obs.value);
            let (new_state, increment) = sir_step(model, &particle.state, n - 1, obs_value, &noise);
            particle.advance(new_state);
            particle.log_weight += increment;
            Ok(0)
        })
        .collect()
}

/// Record the step's row and apply the resample policy. Statistics are
/// taken before resampling; `distinct_count` after.
fn close_out_step(
    ensemble: &mut Ensemble,
    rows: &mut Vec<StepMetrics>,
    n: i64,
    iters: &[usize],
    cfg: &RunConfig,
) -> Result<()> {
    let log_weights = ensemble.log_weights();
    let probs = normalize_log_weights(&log_weights)?;
    let max_weight = probs.iter().cloned().fold(0.0, f64::max);
    let (mean, std) = stats_by(ensemble, &probs, |part| &part.state);
    if should_resample(&cfg.resample, &log_weights) {
        let mut rng = rng_substream(cfg.master_seed, n, 0, StreamRole::Resample);
        let uniforms = uniforms_unit_right_closed(&mut rng, ensemble.len());
        ensemble.particles = match cfg.resample.subset_size {
            Some(s) => resample_subsets(
                &ensemble.particles,
                &log_weights,
                s,
                &uniforms,
                cfg.resample.stratified,
            )?,
            None => {
                let thetas =
                    if cfg.resample.stratified { stratified_thetas(&uniforms) } else { uniforms };
                resample(&ensemble.particles, &probs, &thetas)
            }
        };
    }
    let iters_mean = iters.iter().sum::<usize>() as f64 / iters.len() as f64;
    rows.push(StepMetrics {
        time_index: n,
        ens_mean: mean,
        ens_std: std,
        distinct_count: distinct_count(&ensemble.particles),
        max_weight,
        iters_mean,
    });
    ensemble.time_index = n;
    Ok(())
}

/// Weighted mean and standard deviation of a per-particle state accessor.
fn stats_by<'a>(
    ensemble: &'a Ensemble,
    probs: &[f64],
    pick: impl Fn(&'a Particle) -> &'a DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let dim = pick(&ensemble.particles[0]).len();
    let mut mean = DVector::zeros(dim);
    for (particle, &w) in ensemble.particles.iter().zip(probs.iter()) {
        mean.axpy(w, pick(particle), 1.0);
    }
    let mut var = DVector::zeros(dim);
    for (particle, &w) in ensemble.particles.iter().zip(probs.iter()) {
        let x = pick(particle);
        for i in 0..dim {
            let d = x[i] - mean[i];
            var[i] += w * d * d;
        }
    }
    let std = var.map(f64::sqrt);
    (mean, std)
}

fn compute_rmse(rows: &[StepMetrics], truth: &[DVector<f64>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut count = 0.0;
    for row in rows {
        let t = &truth[row.time_index as usize];
        acc += (&row.ens_mean - t).norm_squared();
        count += t.len() as f64;
    }
    (acc / count).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{iid_gaussian_model, plankton_model, PlanktonParams};
    use crate::sampling::StartMode;

    fn iid_config(particles: usize, steps: i64, filter: FilterKind) -> RunConfig {
        RunConfig { filter, particles, steps, master_seed: 7, ..RunConfig::default() }
    }

    #[test]
    fn schedule_expansion_matches_hand_lists() {
        assert_eq!(ObsSchedule::Every.expand(3), vec![1, 2, 3]);
        assert_eq!(ObsSchedule::EveryKth(7).expand(28), vec![7, 14, 21, 28]);
        assert_eq!(
            ObsSchedule::Indices(vec![9, 3, 3, 40, -2]).expand(10),
            vec![3, 9]
        );
        assert_eq!(ObsSchedule::Every.expand(0), Vec::<i64>::new());
    }

    #[test]
    fn empty_run_yields_empty_metrics() {
        let model = iid_gaussian_model(2).unwrap();
        let cfg = iid_config(4, 0, FilterKind::Implicit);
        let out = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert!(out.steps.is_empty());
        assert_eq!(out.rmse, 0.0);
        assert_eq!(out.truth.len(), 1);
        assert!(out.observations.is_empty());
    }

    #[test]
    fn same_seed_reproduces_metrics_exactly() {
        let model = iid_gaussian_model(2).unwrap();
        let cfg = iid_config(16, 12, FilterKind::Implicit);
        let a = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        let b = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let params = PlanktonParams::default();
        let model = plankton_model(&params).unwrap();
        let initial = params.initial_state();
        let mut cfg = RunConfig {
            filter: FilterKind::Implicit,
            particles: 12,
            steps: 10,
            master_seed: 3,
            ..RunConfig::default()
        };
        cfg.iteration.start = StartMode::PriorMean;
        let serial = run_filter(&model, &initial, &cfg).unwrap();
        cfg.workers = 4;
        let parallel = run_filter(&model, &initial, &cfg).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn linear_observations_need_one_iteration_and_weights_stay_flat() {
        let model = iid_gaussian_model(3).unwrap();
        let cfg = iid_config(8, 6, FilterKind::Implicit);
        let out = run_filter(&model, &DVector::zeros(3), &cfg).unwrap();
        assert_eq!(out.steps.len(), 6);
        for row in &out.steps {
            assert_eq!(row.iters_mean, 1.0);
            assert_eq!(row.max_weight, 1.0 / 8.0);
        }
    }

    #[test]
    fn gap_schedule_runs_joint_pairs() {
        let model = iid_gaussian_model(2).unwrap();
        let mut cfg = iid_config(8, 6, FilterKind::Implicit);
        cfg.obs_schedule = ObsSchedule::EveryKth(2);
        let out = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(out.steps.len(), 6);
        for (i, row) in out.steps.iter().enumerate() {
            assert_eq!(row.time_index, i as i64 + 1);
            assert!(row.max_weight.is_finite());
            assert!(row.ens_mean.iter().all(|v| v.is_finite()));
        }
        // Unobserved pair-start rows report the intact ensemble size and no
        // iteration work of their own.
        for row in out.steps.iter().step_by(2) {
            assert_eq!(row.distinct_count, 8);
            assert_eq!(row.iters_mean, 0.0);
        }
    }

    #[test]
    fn trailing_unobserved_steps_fall_back_to_the_transition_density() {
        let model = iid_gaussian_model(2).unwrap();
        let mut cfg = iid_config(6, 5, FilterKind::Implicit);
        cfg.obs_schedule = ObsSchedule::Indices(vec![2]);
        let out = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(out.steps.len(), 5);
        // Steps 3..5 have no measurement ahead: transition-density sampling
        // leaves weights flat, so the max stays at 1/M.
        for row in &out.steps[2..] {
            assert_eq!(row.max_weight, 1.0 / 6.0);
            assert_eq!(row.iters_mean, 0.0);
        }
    }

    #[test]
    fn baseline_filter_runs_and_reports_no_iterations() {
        let model = iid_gaussian_model(2).unwrap();
        let cfg = iid_config(10, 5, FilterKind::Sir);
        let out = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(out.steps.len(), 5);
        for row in &out.steps {
            assert_eq!(row.iters_mean, 0.0);
            assert!(row.max_weight >= 1.0 / 10.0);
        }
    }

    #[test]
    fn backward_smoothing_variant_runs() {
        let model = iid_gaussian_model(1).unwrap();
        let cfg = iid_config(8, 6, FilterKind::ImplicitBackward);
        let out = run_filter(&model, &DVector::zeros(1), &cfg).unwrap();
        assert_eq!(out.steps.len(), 6);
        assert!(out.rmse.is_finite());
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let model = iid_gaussian_model(2).unwrap();
        let zero = DVector::zeros(2);
        let mut cfg = iid_config(0, 3, FilterKind::Implicit);
        assert!(matches!(
            run_filter(&model, &zero, &cfg),
            Err(FilterError::InvalidConfig(_))
        ));
        cfg = iid_config(4, 3, FilterKind::Implicit);
        cfg.obs_schedule = ObsSchedule::EveryKth(0);
        assert!(matches!(
            run_filter(&model, &zero, &cfg),
            Err(FilterError::InvalidConfig(_))
        ));
        cfg = iid_config(4, 3, FilterKind::Implicit);
        cfg.resample.mode = ResampleMode::WeightRatio { limit: 1.0 };
        assert!(matches!(
            run_filter(&model, &zero, &cfg),
            Err(FilterError::InvalidConfig(_))
        ));
        cfg = iid_config(4, 3, FilterKind::Implicit);
        assert!(matches!(
            run_filter(&model, &DVector::zeros(3), &cfg),
            Err(FilterError::InvalidConfig(_))
        ));
        cfg.workers = 0;
        assert!(matches!(
            run_filter(&model, &zero, &cfg),
            Err(FilterError::InvalidConfig(_))
        ));
    }

    #[test]
    fn subset_policy_runs_within_the_driver() {
        let model = iid_gaussian_model(2).unwrap();
        let mut cfg = iid_config(9, 4, FilterKind::Sir);
        cfg.resample.subset_size = Some(4);
        let out = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(out.steps.len(), 4);
        for row in &out.steps {
            assert!(row.distinct_count <= 9);
        }
    }

    #[test]
    fn stratified_policy_is_deterministic_too() {
        let model = iid_gaussian_model(2).unwrap();
        let mut cfg = iid_config(8, 5, FilterKind::Sir);
        cfg.resample.stratified = true;
        let a = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        let b = run_filter(&model, &DVector::zeros(2), &cfg).unwrap();
        assert_eq!(a, b);
    }
}

//! Configuration file schema and CLI overrides.
//!
//! A run is described by one TOML file with `[run]`, `[model]`,
//! `[observations]`, `[resample]`, `[iteration]`, and `[output]` tables,
//! all optional except `[model]`. Every run-configuration field has both a
//! config key and a command-line override; unknown keys are rejected so
//! typos fail loudly instead of silently running defaults.

use crate::error::{CliError, Result};
use implicit_filter::{
    iid_gaussian_model, plankton_model, FilterKind, IterationConfig, JacobianMode, ObsSchedule,
    PlanktonParams, ResampleMode, ResamplePolicy, RunConfig, StartMode, StateSpaceModel,
};
use nalgebra::DVector;
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub model: ModelSection,
    #[serde(default)]
    pub observations: ObsSection,
    #[serde(default)]
    pub resample: ResampleSection,
    #[serde(default)]
    pub iteration: IterationSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Filter for `run`; `compare` uses `filters` instead.
    #[serde(default)]
    pub filter: Option<String>,
    /// Filters for `compare` (at least two).
    #[serde(default)]
    pub filters: Vec<String>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_steps")]
    pub steps: i64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_particles() -> usize {
    100
}
fn default_steps() -> i64 {
    50
}
fn default_workers() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            filter: None,
            filters: Vec::new(),
            particles: default_particles(),
            steps: default_steps(),
            seed: 0,
            workers: default_workers(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// "plankton" or "iid-gaussian".
    pub kind: String,
    /// iid-gaussian: state dimension.
    #[serde(default)]
    pub dims: Option<usize>,
    /// Plankton noise/initial overrides; defaults match the model module.
    #[serde(default)]
    pub sigma_p: Option<f64>,
    #[serde(default)]
    pub sigma_z: Option<f64>,
    #[serde(default)]
    pub sigma_n: Option<f64>,
    #[serde(default)]
    pub sigma_d: Option<f64>,
    #[serde(default)]
    pub sigma_gamma: Option<f64>,
    #[serde(default)]
    pub sigma_obs: Option<f64>,
    #[serde(default)]
    pub initial: Option<[f64; 4]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObsSection {
    /// "every" (default), "every-kth", or "indices".
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default)]
    pub k: Option<i64>,
    #[serde(default)]
    pub indices: Option<Vec<i64>>,
}

fn default_schedule() -> String {
    "every".to_string()
}

impl Default for ObsSection {
    fn default() -> Self {
        Self { schedule: default_schedule(), k: None, indices: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResampleSection {
    /// "every" (default) or "weight-ratio".
    #[serde(default = "default_resample_mode")]
    pub mode: String,
    #[serde(default)]
    pub ratio_limit: Option<f64>,
    #[serde(default)]
    pub subset_size: Option<usize>,
    #[serde(default)]
    pub stratified: bool,
}

fn default_resample_mode() -> String {
    "every".to_string()
}

impl Default for ResampleSection {
    fn default() -> Self {
        Self { mode: default_resample_mode(), ratio_limit: None, subset_size: None, stratified: false }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSection {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    /// "finite-difference" (default) or "linearized".
    #[serde(default)]
    pub jacobian: Option<String>,
    #[serde(default)]
    pub fd_step: Option<f64>,
    /// "zero" (default) or "prior-mean".
    #[serde(default)]
    pub start: Option<String>,
}


#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

/// Command-line overrides shared by `run` and `compare`. Every field is
/// optional; present values replace the config file's.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub filter: Option<String>,
    pub particles: Option<usize>,
    pub steps: Option<i64>,
    pub workers: Option<usize>,
    pub dims: Option<usize>,
    pub observations: Option<String>,
    pub resample: Option<String>,
    pub subset_size: Option<usize>,
    pub stratified: Option<bool>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub jacobian: Option<String>,
    pub fd_step: Option<f64>,
    pub start: Option<String>,
    pub output_dir: Option<PathBuf>,
}

/// Everything needed to execute a run: the model, its initial state, the
/// run configuration (sans filter), the filter list, and the output dir.
pub struct Prepared {
    pub model: StateSpaceModel,
    pub initial: DVector<f64>,
    pub run: RunConfig,
    pub filters: Vec<FilterKind>,
    pub output_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_filter(name: &str) -> Result<FilterKind> {
    match name {
        "implicit" => Ok(FilterKind::Implicit),
        "implicit-backward" => Ok(FilterKind::ImplicitBackward),
        "sir" => Ok(FilterKind::Sir),
        other => Err(CliError::Config(format!(
            "unknown filter {other:?} (expected implicit, implicit-backward, or sir)"
        ))),
    }
}

pub fn filter_name(kind: FilterKind) -> &'static str {
    match kind {
        FilterKind::Implicit => "implicit",
        FilterKind::ImplicitBackward => "implicit-backward",
        FilterKind::Sir => "sir",
    }
}

fn parse_schedule(section: &ObsSection) -> Result<ObsSchedule> {
    match section.schedule.as_str() {
        "every" => Ok(ObsSchedule::Every),
        "every-kth" => {
            let k = section.k.ok_or_else(|| {
                CliError::Config("observations.schedule = \"every-kth\" needs a k".into())
            })?;
            Ok(ObsSchedule::EveryKth(k))
        }
        "indices" => {
            let idx = section.indices.clone().ok_or_else(|| {
                CliError::Config("observations.schedule = \"indices\" needs indices".into())
            })?;
            Ok(ObsSchedule::Indices(idx))
        }
        other => Err(CliError::Config(format!(
            "unknown observation schedule {other:?} (expected every, every-kth, or indices)"
        ))),
    }
}

/// Compact schedule spec for the command line: "every", "every:7", or
/// "indices:2,5,9".
fn parse_schedule_flag(spec: &str) -> Result<ObsSchedule> {
    if spec == "every" {
        return Ok(ObsSchedule::Every);
    }
    if let Some(k) = spec.strip_prefix("every:") {
        let k = k
            .parse()
            .map_err(|_| CliError::Config(format!("bad stride in --observations {spec:?}")))?;
        return Ok(ObsSchedule::EveryKth(k));
    }
    if let Some(list) = spec.strip_prefix("indices:") {
        let indices = list
            .split(',')
            .map(|part| {
                part.trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad index in --observations {spec:?}")))
            })
            .collect::<Result<Vec<i64>>>()?;
        return Ok(ObsSchedule::Indices(indices));
    }
    Err(CliError::Config(format!(
        "unknown --observations {spec:?} (expected every, every:K, or indices:a,b,...)"
    )))
}

fn parse_resample(section: &ResampleSection) -> Result<ResamplePolicy> {
    let mode = match section.mode.as_str() {
        "every" => ResampleMode::EveryStep,
        "weight-ratio" => {
            let limit = section.ratio_limit.ok_or_else(|| {
                CliError::Config("resample.mode = \"weight-ratio\" needs a ratio_limit".into())
            })?;
            ResampleMode::WeightRatio { limit }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown resample mode {other:?} (expected every or weight-ratio)"
            )))
        }
    };
    Ok(ResamplePolicy { mode, subset_size: section.subset_size, stratified: section.stratified })
}

/// Compact resample spec for the command line: "every" or "ratio:10".
fn parse_resample_flag(spec: &str, policy: &mut ResamplePolicy) -> Result<()> {
    if spec == "every" {
        policy.mode = ResampleMode::EveryStep;
        return Ok(());
    }
    if let Some(limit) = spec.strip_prefix("ratio:") {
        let limit = limit
            .parse()
            .map_err(|_| CliError::Config(format!("bad limit in --resample {spec:?}")))?;
        policy.mode = ResampleMode::WeightRatio { limit };
        return Ok(());
    }
    Err(CliError::Config(format!(
        "unknown --resample {spec:?} (expected every or ratio:LIMIT)"
    )))
}

fn parse_jacobian(name: &str) -> Result<JacobianMode> {
    match name {
        "finite-difference" => Ok(JacobianMode::FiniteDifference),
        "linearized" => Ok(JacobianMode::Linearized),
        other => Err(CliError::Config(format!(
            "unknown jacobian mode {other:?} (expected finite-difference or linearized)"
        ))),
    }
}

fn parse_start(name: &str) -> Result<StartMode> {
    match name {
        "zero" => Ok(StartMode::Zero),
        "prior-mean" => Ok(StartMode::PriorMean),
        other => Err(CliError::Config(format!(
            "unknown iteration start {other:?} (expected zero or prior-mean)"
        ))),
    }
}

fn build_model(section: &ModelSection, dims_override: Option<usize>) -> Result<(StateSpaceModel, DVector<f64>)> {
    match section.kind.as_str() {
        "plankton" => {
            let mut params = PlanktonParams::default();
            if let Some(init) = section.initial {
                params.initial = init;
            }
            if let Some(s) = section.sigma_p {
                params.sigma[0] = s;
            }
            if let Some(s) = section.sigma_z {
                params.sigma[1] = s;
            }
            if let Some(s) = section.sigma_n {
                params.sigma[2] = s;
            }
            if let Some(s) = section.sigma_d {
                params.sigma[3] = s;
            }
            if let Some(s) = section.sigma_gamma {
                params.sigma_gamma = s;
            }
            if let Some(s) = section.sigma_obs {
                params.sigma_obs = s;
            }
            let model = plankton_model(&params)?;
            let initial = params.initial_state();
            Ok((model, initial))
        }
        "iid-gaussian" => {
            let dims = dims_override.or(section.dims).ok_or_else(|| {
                CliError::Config("model.kind = \"iid-gaussian\" needs dims".into())
            })?;
            let model = iid_gaussian_model(dims)?;
            let initial = DVector::zeros(dims);
            Ok((model, initial))
        }
        other => Err(CliError::Config(format!(
            "unknown model kind {other:?} (expected plankton or iid-gaussian)"
        ))),
    }
}

/// Resolve the config file plus command-line overrides into a ready run.
/// `need_compare` selects between the single `filter` key and the
/// `filters` list (which must name at least two).
pub fn prepare(file: &FileConfig, overrides: &Overrides, need_compare: bool) -> Result<Prepared> {
    let (model, initial) = build_model(&file.model, overrides.dims)?;

    let mut iteration = IterationConfig::default();
    if let Some(tol) = overrides.tol.or(file.iteration.tol) {
        iteration.tol = tol;
    }
    if let Some(mi) = overrides.max_iters.or(file.iteration.max_iters) {
        iteration.max_iters = mi;
    }
    if let Some(name) = overrides.jacobian.as_deref().or(file.iteration.jacobian.as_deref()) {
        iteration.jacobian_mode = parse_jacobian(name)?;
    }
    if let Some(h) = overrides.fd_step.or(file.iteration.fd_step) {
        iteration.fd_step = h;
    }
    if let Some(name) = overrides.start.as_deref().or(file.iteration.start.as_deref()) {
        iteration.start = parse_start(name)?;
    }

    let mut resample = parse_resample(&file.resample)?;
    if let Some(spec) = overrides.resample.as_deref() {
        parse_resample_flag(spec, &mut resample)?;
    }
    if let Some(s) = overrides.subset_size {
        resample.subset_size = Some(s);
    }
    if let Some(s) = overrides.stratified {
        resample.stratified = s;
    }

    let obs_schedule = match overrides.observations.as_deref() {
        Some(spec) => parse_schedule_flag(spec)?,
        None => parse_schedule(&file.observations)?,
    };

    let filters = if need_compare {
        let names = &file.run.filters;
        if names.len() < 2 {
            return Err(CliError::Config(
                "compare needs at least two entries in run.filters".into(),
            ));
        }
        names.iter().map(|n| parse_filter(n)).collect::<Result<Vec<_>>>()?
    } else {
        let name = overrides
            .filter
            .as_deref()
            .or(file.run.filter.as_deref())
            .unwrap_or("implicit");
        vec![parse_filter(name)?]
    };

    let run = RunConfig {
        filter: filters[0],
        particles: overrides.particles.unwrap_or(file.run.particles),
        steps: overrides.steps.unwrap_or(file.run.steps),
        obs_schedule,
        resample,
        iteration,
        master_seed: overrides.seed.unwrap_or(file.run.seed),
        workers: overrides.workers.unwrap_or(file.run.workers),
    };

    let output_dir = overrides
        .output_dir
        .clone()
        .or_else(|| file.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    Ok(Prepared { model, initial, run, filters, output_dir })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> FileConfig {
        toml::from_str("[model]\nkind = \"iid-gaussian\"\ndims = 2\n").unwrap()
    }

    #[test]
    fn defaults_fill_every_section() {
        let file = minimal();
        let prepared = prepare(&file, &Overrides::default(), false).unwrap();
        assert_eq!(prepared.run.particles, 100);
        assert_eq!(prepared.run.steps, 50);
        assert_eq!(prepared.run.workers, 1);
        assert_eq!(prepared.filters, vec![FilterKind::Implicit]);
        assert_eq!(prepared.model.dim_state, 2);
        assert_eq!(prepared.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<FileConfig>("[model]\nkind = \"plankton\"\ntypo = 1\n");
        assert!(err.is_err());
    }

    #[test]
    fn overrides_beat_file_values() {
        let file: FileConfig = toml::from_str(
            "[run]\nfilter = \"sir\"\nparticles = 7\nseed = 3\n[model]\nkind = \"iid-gaussian\"\ndims = 2\n",
        )
        .unwrap();
        let overrides = Overrides {
            filter: Some("implicit".into()),
            particles: Some(11),
            seed: Some(9),
            observations: Some("every:3".into()),
            resample: Some("ratio:5".into()),
            start: Some("prior-mean".into()),
            ..Overrides::default()
        };
        let prepared = prepare(&file, &overrides, false).unwrap();
        assert_eq!(prepared.filters, vec![FilterKind::Implicit]);
        assert_eq!(prepared.run.particles, 11);
        assert_eq!(prepared.run.master_seed, 9);
        assert_eq!(prepared.run.obs_schedule, ObsSchedule::EveryKth(3));
        assert_eq!(prepared.run.resample.mode, ResampleMode::WeightRatio { limit: 5.0 });
        assert_eq!(prepared.run.iteration.start, StartMode::PriorMean);
    }

    #[test]
    fn compare_requires_two_filters() {
        let file: FileConfig = toml::from_str(
            "[run]\nfilters = [\"implicit\"]\n[model]\nkind = \"iid-gaussian\"\ndims = 2\n",
        )
        .unwrap();
        let err = prepare(&file, &Overrides::default(), true).err().unwrap();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn plankton_overrides_flow_into_params() {
        let file: FileConfig = toml::from_str(
            "[model]\nkind = \"plankton\"\nsigma_p = 0.125\nsigma_obs = 0.5\n",
        )
        .unwrap();
        let prepared = prepare(&file, &Overrides::default(), false).unwrap();
        assert_eq!(prepared.model.dim_state, 5);
        assert_eq!(prepared.initial.len(), 5);
    }

    #[test]
    fn bad_filter_name_is_a_config_error() {
        let file = minimal();
        let overrides = Overrides { filter: Some("bogus".into()), ..Overrides::default() };
        let err = prepare(&file, &overrides, false).err().unwrap();
        assert_eq!(err.exit_code(), 1);
    }
}

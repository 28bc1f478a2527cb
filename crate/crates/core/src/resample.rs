//! Weight normalization and resampling.
//!
//! Resampling draws M replacement particles: uniform `theta_k` picks the
//! particle `i` whose cumulative probability bracket contains it,
//! `cum[i-1] < theta_k <= cum[i]`. Weights are carried in log space until
//! the moment of normalization, and reset to zero (log scale) afterwards.

use crate::error::{FilterError, Result};
use crate::model::Particle;

/// When and how the driver resamples.
#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePolicy {
    /// Trigger condition.
    pub mode: ResampleMode,
    /// Resample only this many particles at a time, cycling through index
    /// blocks (`None` resamples the whole ensemble). Partial resampling
    /// redistributes the block's weight while leaving other particles,
    /// and their weights, untouched.
    pub subset_size: Option<usize>,
    /// Use stratified uniforms (`theta_k` drawn from the k-th of M equal
    /// subintervals) instead of independent uniforms.
    pub stratified: bool,
}

/// Trigger condition for resampling.
#[derive(Debug, Clone, PartialEq)]
pub enum ResampleMode {
    /// Resample after every step.
    EveryStep,
    /// Resample when the spread of accumulated log-weights exceeds
    /// `log(limit)`: `max - min > ln(limit)`.
    WeightRatio {
        /// Allowed max/min weight ratio before a resample triggers.
        limit: f64,
    },
    /// Never resample (useful for weight-degeneracy studies).
    Never,
}

impl Default for ResamplePolicy {
    fn default() -> Self {
        Self { mode: ResampleMode::EveryStep, subset_size: None, stratified: false }
    }
}

/// Whether the policy calls for a resample given current log-weights.
pub fn should_resample(policy: &ResamplePolicy, log_weights: &[f64]) -> bool {
    match policy.mode {
        ResampleMode::EveryStep => true,
        ResampleMode::Never => false,
        ResampleMode::WeightRatio { limit } => {
            let mut max = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            for &lw in log_weights {
                max = max.max(lw);
                min = min.min(lw);
            }
            max - min > limit.ln()
        }
    }
}

/// Normalize log-weights into probabilities summing to one.
///
/// Stable against large magnitudes: the maximum is subtracted before
/// exponentiation. Entries of `-inf` map to probability zero; if every
/// entry is `-inf` (or anything is NaN) the ensemble carries no usable
/// mass and an error is returned.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|lw| lw.is_nan()) {
        return Err(FilterError::Diverged("NaN log-weight".into()));
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(FilterError::DegenerateEnsemble);
    }
    let mut probs: Vec<f64> = log_weights.iter().map(|lw| (lw - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

/// Index selected by each `theta` under the cumulative bracket rule.
///
/// `probs` must be normalized; `thetas` lie in (0, 1]. For each `theta`
/// the chosen `i` satisfies `cum[i-1] < theta <= cum[i]`, so zero-probability
/// particles are never selected.
pub fn resample_indices(probs: &[f64], thetas: &[f64]) -> Vec<usize> {
    let mut cum = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cum.push(acc);
    }
    thetas
        .iter()
        .map(|&theta| {
            let mut idx = cum.partition_point(|&c| c < theta);
            // Rounding in the cumulative sum can leave cum[last] slightly
            // below 1; clamp, then step over zero-probability entries the
            // exact bracket could never have selected.
            if idx >= probs.len() {
                idx = probs.len() - 1;
            }
            while idx > 0 && probs[idx] == 0.0 {
                idx -= 1;
            }
            idx
        })
        .collect()
}

/// Multinomial resampling of a full ensemble.
///
/// Returns `thetas.len()` particles: copy `k` is a clone of the particle
/// selected by `thetas[k]`, with log-weight reset to zero and `ancestor`
/// recording the source index. Histories are cloned with their particles.
pub fn resample(particles: &[Particle], probs: &[f64], thetas: &[f64]) -> Vec<Particle> {
    let indices = resample_indices(probs, thetas);
    indices
        .into_iter()
        .map(|i| {
            let mut p = particles[i].clone();
            p.log_weight = 0.0;
            p.ancestor = i;
            p
        })
        .collect()
}

/// Block-partitioned resampling: indices are split into consecutive blocks
/// of `subset_size` (the last block may be shorter) and each block is
/// resampled independently from its own members.
///
/// Unlike [`resample`], replacement weights are not reset to zero: every
/// member of a block receives the block's mean unnormalized mass, so the
/// relative weight between blocks is preserved while weight inside each
/// block is flattened. A block whose weights are all `-inf` carries no
/// usable mass and is passed through unchanged. `uniforms` supplies one
/// draw in (0, 1] per particle; with `stratified` set, each block
/// stratifies its own draws.
pub fn resample_subsets(
    particles: &[Particle],
    log_weights: &[f64],
    subset_size: usize,
    uniforms: &[f64],
    stratified: bool,
) -> Result<Vec<Particle>> {
    if subset_size == 0 {
        return Err(FilterError::InvalidConfig("subset_size must be at least 1".into()));
    }
    if log_weights.iter().any(|lw| lw.is_nan()) {
        return Err(FilterError::Diverged("NaN log-weight".into()));
    }
    // One shared reference level keeps the blocks' replacement weights
    // comparable with each other.
    let global_max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !global_max.is_finite() {
        return Err(FilterError::DegenerateEnsemble);
    }
    let mut out = Vec::with_capacity(particles.len());
    for start in (0..particles.len()).step_by(subset_size) {
        let end = (start + subset_size).min(particles.len());
        let block = &log_weights[start..end];
        let block_max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !block_max.is_finite() {
            out.extend(particles[start..end].iter().cloned());
            continue;
        }
        let probs = normalize_log_weights(block)?;
        let block_uniforms = &uniforms[start..end];
        let thetas = if stratified {
            stratified_thetas(block_uniforms)
        } else {
            block_uniforms.to_vec()
        };
        let mass: f64 = block.iter().map(|lw| (lw - global_max).exp()).sum();
        let share = (mass / block.len() as f64).ln();
        for i in resample_indices(&probs, &thetas) {
            let mut p = particles[start + i].clone();
            p.log_weight = share;
            p.ancestor = start + i;
            out.push(p);
        }
    }
    Ok(out)
}

/// Number of distinct ancestors surviving the most recent resample.
pub fn distinct_count(particles: &[Particle]) -> usize {
    let mut seen: Vec<usize> = particles.iter().map(|p| p.ancestor).collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Stratified uniforms: `theta_k = (k + u_k) / count` with `u_k` in (0, 1],
/// one per subinterval. With equal probabilities this selects the identity
/// permutation, preserving the multiset of states.
pub fn stratified_thetas(uniforms: &[f64]) -> Vec<f64> {
    let count = uniforms.len() as f64;
    uniforms
        .iter()
        .enumerate()
        .map(|(k, &u)| (k as f64 + u) / count)
        .collect()
}

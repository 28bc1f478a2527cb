//! Twin-experiment data: simulate one truth trajectory and noisy
//! observations of it, so a filter run can be scored against a known state.

use nalgebra::DVector;

use crate::error::Result;
use crate::model::{propagate, ObservationRecord, StateSpaceModel};
use crate::rng::{rng_substream, standard_normal_vector, StreamRole};

/// A simulated truth trajectory with its observation sequence.
#[derive(Debug, Clone)]
pub struct TwinData {
    /// States `X^0 ..= X^steps` (length `steps + 1`).
    pub truth: Vec<DVector<f64>>,
    /// One record per step `1 ..= steps`; absent where nothing is observed.
    pub observations: Vec<ObservationRecord>,
}

impl TwinData {
    /// The observation record for step `n` (1-based), if within range.
    pub fn observation_at(&self, n: i64) -> Option<&ObservationRecord> {
        if n < 1 {
            return None;
        }
        self.observations.get((n - 1) as usize)
    }
}

/// Simulate `steps` transitions from `initial` and observe at `obs_times`
/// (step indices in `1 ..= steps`). Truth noise and observation noise come
/// from dedicated substreams of `master_seed`, so the same seed always
/// produces the same data regardless of what else is drawn elsewhere.
pub fn synth_twin_data(
    model: &StateSpaceModel,
    initial: &DVector<f64>,
    steps: i64,
    obs_times: &[i64],
    master_seed: u64,
) -> Result<TwinData> {
    let mut truth = Vec::with_capacity(steps as usize + 1);
    let mut observations = Vec::with_capacity(steps as usize);
    let mut state = initial.clone();
    model.apply_clamp(&mut state);
    truth.push(state.clone());

    for n in 1..=steps {
        let mut rng = rng_substream(master_seed, n, 0, StreamRole::TruthNoise);
        let noise = standard_normal_vector(&mut rng, model.dim_state);
        let mut next = propagate(model, &state, n - 1, &noise);
        model.apply_clamp(&mut next);
        state = next;
        truth.push(state.clone());

        if obs_times.contains(&n) {
            let mut obs_rng = rng_substream(master_seed, n, 0, StreamRole::ObsNoise);
            let eta = standard_normal_vector(&mut obs_rng, model.dim_obs);
            let value = model.obs_map(&state) + model.obs_noise.component_mul(&eta);
            observations.push(ObservationRecord::present(n, value));
        } else {
            observations.push(ObservationRecord::absent(n, model.dim_obs));
        }
    }

    Ok(TwinData { truth, observations })
}

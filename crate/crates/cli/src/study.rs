//! Maximum-weight degeneracy study: many independent single-step runs of
//! both filters on the memoryless Gaussian model, recording each run's
//! maximum normalized particle weight.

use crate::error::{CliError, Result};
use implicit_filter::{
    forward_step, iid_gaussian_model, max_normalized_weight, rng_substream, sir_step,
    standard_normal_vector, synth_twin_data, IterationConfig, StreamRole,
};
use nalgebra::DVector;
use rand::RngCore;
use rayon::prelude::*;

/// One (implicit, sir) max-weight pair per run, in run order. Run seeds
/// derive from the master seed through a dedicated substream, so the
/// result is independent of the worker count.
pub fn max_weight_study(
    dims: usize,
    particles: usize,
    runs: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<(f64, f64)>> {
    if dims == 0 || particles == 0 || runs == 0 {
        return Err(CliError::Config(
            "dims, particles, and runs must all be positive".into(),
        ));
    }
    let model = iid_gaussian_model(dims)?;
    let cfg = IterationConfig::default();
    let zero = DVector::zeros(dims);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;

    pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|run| -> Result<(f64, f64)> {
                let mut seeder = rng_substream(master_seed, run as i64, 0, StreamRole::RunSeed);
                let run_seed = seeder.next_u64();
                let data = synth_twin_data(&model, &zero, 1, &[1], run_seed)?;
                let b = &data.observations[0].value;

                let mut impl_lws = Vec::with_capacity(particles);
                let mut sir_lws = Vec::with_capacity(particles);
                for p in 0..particles {
                    let mut rng = rng_substream(run_seed, 1, p, StreamRole::Xi);
                    let xi = standard_normal_vector(&mut rng, dims);
                    let r = forward_step(&model, &zero, 0, b, &xi, &cfg)?;
                    impl_lws.push(-r.phi + r.log_jac);

                    let mut rng = rng_substream(run_seed, 1, p, StreamRole::SirProposal);
                    let noise = standard_normal_vector(&mut rng, dims);
                    let (_, lw) = sir_step(&model, &zero, 0, Some(b), &noise);
                    sir_lws.push(lw);
                }
                Ok((max_normalized_weight(&impl_lws)?, max_normalized_weight(&sir_lws)?))
            })
            .collect()
    })
}

//! Counter-based random substreams.
//!
//! Every random draw in a run is addressed by `(master seed, step, particle,
//! role)`. Each address opens an independent ChaCha stream, so results do not
//! depend on the order in which particles are processed — the particle loop
//! can run on any number of workers and reproduce bit-identical output.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// What a substream is consumed for. Each role gets a disjoint stream even
/// when step and particle indices coincide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    /// Process noise when simulating the synthetic truth trajectory.
    TruthNoise = 0,
    /// Measurement noise applied to the truth when emitting observations.
    ObsNoise = 1,
    /// Reference Gaussian vector for a forward sampling step.
    Xi = 2,
    /// Reference Gaussian pair for a joint two-step (sparse) sample.
    XiPair = 3,
    /// Reference Gaussian vector for a backward (smoothing) step.
    XiBackward = 4,
    /// Proposal noise for the SIR baseline.
    SirProposal = 5,
    /// Uniforms driving resampling; drawn once per step with particle 0.
    Resample = 6,
    /// Seeds for the independent runs of a repeated study.
    RunSeed = 7,
}

/// Open the substream addressed by `(master_seed, step, particle, role)`.
///
/// The master seed keys the cipher; the address is packed into the 64-bit
/// stream counter (role: 8 bits, step: 24 bits, particle: 32 bits), so
/// distinct addresses yield disjoint keystreams by construction. Steps are
/// taken modulo 2^24 and must stay below that bound in a single run.
pub fn rng_substream(master_seed: u64, step: i64, particle: usize, role: StreamRole) -> ChaCha12Rng {
    debug_assert!((0..1 << 24).contains(&step), "step index out of stream range");
    debug_assert!(particle < (1 << 32), "particle index out of stream range");
    let stream = ((role as u64) << 56) | (((step as u64) & 0xff_ffff) << 32) | particle as u64;
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Draw a standard-normal vector of length `dim` from a substream.
pub fn standard_normal_vector(rng: &mut ChaCha12Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Draw `count` uniforms in the half-open interval (0, 1].
///
/// The right-closed interval matches the resampling bracket
/// `cum[i-1] < theta <= cum[i]`, which needs `theta > 0`.
pub fn uniforms_unit_right_closed(rng: &mut ChaCha12Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| 1.0 - rng.gen::<f64>()).collect()
}

//! Concrete models: linear-Gaussian systems, the memoryless i.i.d. Gaussian
//! benchmark, the plankton ecosystem, and synthetic twin-data generation.

mod plankton;
mod twin;

pub use plankton::{
    plankton_drift, plankton_model, plankton_obs, plankton_obs_jacobian, plankton_step,
    PlanktonParams, PLANKTON_DIM,
};
pub use twin::{synth_twin_data, TwinData};

use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::model::StateSpaceModel;

/// Linear-Gaussian model: `F(x) = A x`, constant diagonal `G`, `h(x) = H x`,
/// diagonal `Q`. Carries its matrices as linear structure, so the Kalman
/// recursion accepts it.
pub fn linear_gaussian_model(
    drift_matrix: DMatrix<f64>,
    diffusion_diag: DVector<f64>,
    obs_matrix: DMatrix<f64>,
    obs_noise: DVector<f64>,
    delta: f64,
) -> Result<StateSpaceModel> {
    let m = drift_matrix.nrows();
    let k = obs_matrix.nrows();
    if drift_matrix.ncols() != m {
        return Err(FilterError::InvalidConfig("drift matrix must be square".into()));
    }
    if diffusion_diag.len() != m || obs_matrix.ncols() != m {
        return Err(FilterError::InvalidConfig("linear model dimension mismatch".into()));
    }
    let a = drift_matrix.clone();
    let h_map = obs_matrix.clone();
    let h_jac = obs_matrix.clone();
    let model = StateSpaceModel::new(
        m,
        k,
        delta,
        move |x, _| &a * x,
        move |_, _| diffusion_diag.clone(),
        move |x| &h_map * x,
        move |_| h_jac.clone(),
        obs_noise,
    )?;
    Ok(model.with_linear_parts(drift_matrix, obs_matrix))
}

/// The memoryless benchmark: every step the state is an independent
/// standard Gaussian vector, observed directly with unit noise.
///
/// Encoded as `F(x) = -x / delta` with `delta = 1`, so the one-step
/// transition mean `x + F(x) delta` is exactly zero — the state forgets
/// its past. With `G = I`, `h = id`, `Q = I` the filter posteriors have
/// closed forms, and in high dimension the SIR baseline degenerates while
/// the sampled filter keeps exactly uniform weights.
pub fn iid_gaussian_model(dims: usize) -> Result<StateSpaceModel> {
    let a = DMatrix::from_diagonal_element(dims, dims, -1.0);
    let h = DMatrix::identity(dims, dims);
    linear_gaussian_model(
        a,
        DVector::from_element(dims, 1.0),
        h,
        DVector::from_element(dims, 1.0),
        1.0,
    )
}

/// Random stable diagonal linear-Gaussian system, for oracle comparisons.
///
/// All four matrices are diagonal, so every covariance the filter and the
/// Kalman recursion exchange stays diagonal as well.
pub fn random_diagonal_linear_model(
    dims: usize,
    delta: f64,
    rng: &mut impl rand::Rng,
) -> Result<StateSpaceModel> {
    let a = DMatrix::from_diagonal(&DVector::from_fn(dims, |_, _| -0.2 - 0.7 * rng.gen::<f64>()));
    let h = DMatrix::from_diagonal(&DVector::from_fn(dims, |_, _| 0.5 + rng.gen::<f64>()));
    linear_gaussian_model(
        a,
        DVector::from_fn(dims, |_, _| 0.4 + rng.gen::<f64>()),
        h,
        DVector::from_fn(dims, |_, _| 0.3 + rng.gen::<f64>()),
        delta,
    )
}

//! A five-component plankton ecosystem with a random growth-rate factor.
//!
//! State `(P, Z, N, D, dg)`: phytoplankton, zooplankton, nutrient, detritus,
//! and the anomaly `dg` of the phytoplankton growth factor
//! `gamma = 0.14 + 3 dg`. The deterministic rates are
//!
//! ```text
//! dP/dt = N/(0.2+N) * gamma * P - 0.1 P - 0.6 * P/(0.1+P) * Z
//! dZ/dt = 0.18 * P/(0.1+P) * Z - 0.1 Z
//! dN/dt = 0.1 D + 0.24 * P/(0.1+P) * Z - gamma P * N/(0.2+N) + 0.05 Z
//! dD/dt = -0.1 D + 0.1 P + 0.18 * P/(0.1+P) * Z + 0.05 Z
//! d(dg)/dt = -0.1 dg
//! ```
//!
//! so the total `P + Z + N + D` is conserved by the drift, and with the
//! one-day step the anomaly follows the stationary recursion
//! `dg' = 0.9 dg + noise`. Only `log P` is observed. Concentrations are
//! floored at 1% of their initial values after every transition, which keeps
//! the saturation denominators `(0.2 + N)` and `(0.1 + P)` and the
//! observation `log P` well defined.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::model::{propagate, StateSpaceModel};

/// State dimension of the plankton model.
pub const PLANKTON_DIM: usize = 5;

const GAMMA_BASE: f64 = 0.14;
const GAMMA_COUPLING: f64 = 3.0;
/// One-day memory factor of the growth anomaly: `dg' = 0.9 dg + noise`.
const GAMMA_MEMORY: f64 = 0.9;
/// Fraction of the initial concentrations used as the floor.
const FLOOR_FRACTION: f64 = 0.01;

/// Parameters of the plankton model: initial concentrations, per-component
/// process noise scales, and the `log P` observation noise.
#[derive(Debug, Clone)]
pub struct PlanktonParams {
    /// Initial concentrations `(P, Z, N, D)`; the anomaly starts at zero.
    pub initial: [f64; 4],
    /// Process noise scales `(sigma_P, sigma_Z, sigma_N, sigma_D)`.
    pub sigma: [f64; 4],
    /// Noise scale of the growth anomaly recursion.
    pub sigma_gamma: f64,
    /// Observation noise scale on `log P`.
    pub sigma_obs: f64,
}

impl Default for PlanktonParams {
    /// Reference configuration: initial state `(0.125, 0.00708, 0.764,
    /// 0.136)`, process noise at 1% of the initial concentrations,
    /// `sigma_gamma = 0.01`, observation noise `0.3`.
    fn default() -> Self {
        let initial = [0.125, 0.00708, 0.764, 0.136];
        Self {
            initial,
            sigma: initial.map(|v| 0.01 * v),
            sigma_gamma: 0.01,
            sigma_obs: 0.3,
        }
    }
}

impl PlanktonParams {
    /// Same as the default but with the phytoplankton noise scale replaced —
    /// the knob the comparison experiments turn.
    pub fn with_sigma_p(mut self, sigma_p: f64) -> Self {
        self.sigma[0] = sigma_p;
        self
    }

    /// Initial state vector `(P, Z, N, D, 0)`.
    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.initial[0], self.initial[1], self.initial[2], self.initial[3], 0.0])
    }

    /// Component floors: 1% of the initial concentrations; the anomaly is
    /// unbounded (floor `-inf`).
    pub fn floors(&self) -> DVector<f64> {
        DVector::from_vec(vec![
            FLOOR_FRACTION * self.initial[0],
            FLOOR_FRACTION * self.initial[1],
            FLOOR_FRACTION * self.initial[2],
            FLOOR_FRACTION * self.initial[3],
            f64::NEG_INFINITY,
        ])
    }
}

/// Growth factor `gamma = 0.14 + 3 dg` at a state.
fn gamma_of(state: &DVector<f64>) -> f64 {
    GAMMA_BASE + GAMMA_COUPLING * state[4]
}

/// Deterministic rates of the plankton system (the drift `F`).
pub fn plankton_drift(state: &DVector<f64>) -> DVector<f64> {
    let (p, z, n, d, dg) = (state[0], state[1], state[2], state[3], state[4]);
    let gamma = gamma_of(state);
    let uptake = n / (0.2 + n); // nutrient saturation of growth
    let grazing = p / (0.1 + p); // prey saturation of grazing

    let dp = uptake * gamma * p - 0.1 * p - 0.6 * grazing * z;
    let dz = 0.18 * grazing * z - 0.1 * z;
    let dn = 0.1 * d + 0.24 * grazing * z - gamma * p * uptake + 0.05 * z;
    let dd = -0.1 * d + 0.1 * p + 0.18 * grazing * z + 0.05 * z;
    let ddg = -(1.0 - GAMMA_MEMORY) * dg;

    DVector::from_vec(vec![dp, dz, dn, dd, ddg])
}

/// Observation map: `h(x) = log P` (one component).
pub fn plankton_obs(state: &DVector<f64>) -> DVector<f64> {
    DVector::from_element(1, state[0].ln())
}

/// Jacobian of the observation map: `(1/P, 0, 0, 0, 0)`.
pub fn plankton_obs_jacobian(state: &DVector<f64>) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(1, PLANKTON_DIM);
    jac[(0, 0)] = 1.0 / state[0];
    jac
}

/// Build the plankton state-space model (one-day step, floored states).
pub fn plankton_model(params: &PlanktonParams) -> Result<StateSpaceModel> {
    let sigma = DVector::from_vec(vec![
        params.sigma[0],
        params.sigma[1],
        params.sigma[2],
        params.sigma[3],
        params.sigma_gamma,
    ]);
    let floors = params.floors();
    let model = StateSpaceModel::new(
        PLANKTON_DIM,
        1,
        1.0,
        |x, _| plankton_drift(x),
        move |_, _| sigma.clone(),
        plankton_obs,
        plankton_obs_jacobian,
        DVector::from_element(1, params.sigma_obs),
    )?;
    Ok(model.with_clamp(move |state| {
        for i in 0..PLANKTON_DIM {
            if state[i] < floors[i] {
                state[i] = floors[i];
            }
        }
    }))
}

/// One plankton transition: Euler step with noise, then the floors.
pub fn plankton_step(
    model: &StateSpaceModel,
    state: &DVector<f64>,
    time: i64,
    noise: &DVector<f64>,
) -> DVector<f64> {
    let mut next = propagate(model, state, time, noise);
    model.apply_clamp(&mut next);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::obs_jacobian_fd_error;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn drift_at_reference_state_matches_frozen_values() {
        // Evaluated independently (numpy, float64) at the initial state.
        let x0 = PlanktonParams::default().initial_state();
        let d = plankton_drift(&x0);
        assert_relative_eq!(d[0], -0.0009907053941908698, max_relative = 1e-12);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-15); // zooplankton equilibrium at x0
        assert_relative_eq!(d[2], 0.0010287053941908705, max_relative = 1e-12);
        assert_relative_eq!(d[3], -3.8000000000000165e-05, max_relative = 1e-10);
        assert_eq!(d[4], 0.0);
    }

    #[test]
    fn drift_at_generic_state_matches_frozen_values() {
        let x = DVector::from_vec(vec![0.2, 0.01, 0.5, 0.1, 0.02]);
        let d = plankton_drift(&x);
        assert_relative_eq!(d[0], 0.0045714285714285735, max_relative = 1e-12);
        assert_relative_eq!(d[1], 0.0002, max_relative = 1e-12);
        assert_relative_eq!(d[2], -0.016471428571428574, max_relative = 1e-12);
        assert_relative_eq!(d[3], 0.0117, max_relative = 1e-12);
        assert_relative_eq!(d[4], -0.002, max_relative = 1e-12);
    }

    #[test]
    fn drift_conserves_total_concentration() {
        // The (P, Z, N, D) rates sum to zero: grazing losses are exactly
        // split among zooplankton growth, nutrient, and detritus.
        for x in [
            PlanktonParams::default().initial_state(),
            DVector::from_vec(vec![0.2, 0.01, 0.5, 0.1, 0.02]),
            DVector::from_vec(vec![0.05, 0.002, 1.2, 0.3, -0.01]),
        ] {
            let d = plankton_drift(&x);
            assert_abs_diff_eq!(d[0] + d[1] + d[2] + d[3], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn anomaly_recursion_has_nine_tenths_memory() {
        // dg = 0.1 steps to 0.09; gamma moves from 0.44 to 0.41.
        let mut x = PlanktonParams::default().initial_state();
        x[4] = 0.1;
        assert_relative_eq!(gamma_of(&x), 0.44, max_relative = 1e-15);
        let model = plankton_model(&PlanktonParams::default()).unwrap();
        let next = plankton_step(&model, &x, 0, &DVector::zeros(PLANKTON_DIM));
        assert_relative_eq!(next[4], 0.09, max_relative = 1e-14);
        assert_relative_eq!(gamma_of(&next), 0.41, max_relative = 1e-14);
    }

    #[test]
    fn euler_step_from_initial_state_matches_frozen_values() {
        let params = PlanktonParams::default();
        let model = plankton_model(&params).unwrap();
        let next = plankton_step(&model, &params.initial_state(), 0, &DVector::zeros(PLANKTON_DIM));
        assert_relative_eq!(next[0], 0.12400929460580913, max_relative = 1e-12);
        assert_relative_eq!(next[1], 0.00708, max_relative = 1e-14);
        assert_relative_eq!(next[2], 0.7650287053941909, max_relative = 1e-12);
        assert_relative_eq!(next[3], 0.135962, max_relative = 1e-12);
    }

    #[test]
    fn floors_clamp_concentrations_but_not_the_anomaly() {
        let params = PlanktonParams::default();
        let model = plankton_model(&params).unwrap();
        // A big negative noise kick drives P below its floor.
        let noise = DVector::from_vec(vec![-1e4, -1e4, -1e4, -1e4, -3.0]);
        let next = plankton_step(&model, &params.initial_state(), 0, &noise);
        assert_relative_eq!(next[0], 0.01 * 0.125, max_relative = 1e-14);
        assert_relative_eq!(next[1], 0.01 * 0.00708, max_relative = 1e-14);
        assert_relative_eq!(next[2], 0.01 * 0.764, max_relative = 1e-14);
        assert_relative_eq!(next[3], 0.01 * 0.136, max_relative = 1e-14);
        assert!(next[4] < 0.0, "anomaly must pass through unclamped");
        // Observation stays finite on floored states.
        assert!(plankton_obs(&next)[0].is_finite());
    }

    #[test]
    fn observation_jacobian_matches_finite_differences() {
        let model = plankton_model(&PlanktonParams::default()).unwrap();
        let states: Vec<DVector<f64>> = (1..=100)
            .map(|i| {
                let t = i as f64 / 25.0;
                DVector::from_vec(vec![0.05 + 0.1 * t, 0.007, 0.7 - 0.05 * t, 0.14, 0.01 * t])
            })
            .collect();
        assert!(obs_jacobian_fd_error(&model, &states, 1e-7) < 1e-5);
    }
}

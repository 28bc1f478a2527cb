//! Completing squares: collapsing a Gaussian prior and a linearized
//! observation into a single Gaussian plus a scalar remainder.
//!
//! Given a prior `N(prior_mean, P)` with diagonal `P`, a linearization
//! `h(x) ~ H x + const` with target `z`, and observation noise covariance
//! `R`, the sum of the two quadratic forms rearranges exactly into
//!
//! ```text
//! (x - prior)' P^{-1} (x - prior)/2 + (H x - z)' R^{-1} (H x - z)/2
//!   = (x - mean)' Sigma^{-1} (x - mean)/2 + phi,
//! ```
//!
//! with
//!
//! ```text
//! Sigma^{-1} = P^{-1} + H' R^{-1} H,
//! mean       = Sigma (P^{-1} prior + H' R^{-1} z),
//! K          = H P H' + R,
//! phi        = (z - H prior)' K^{-1} (z - H prior) / 2.
//! ```
//!
//! The result is a "pseudo-Gaussian": the Gaussian piece is sampled by
//! `mean + L xi` with `Sigma = L L'`, and `phi` rides along as a log-weight.
//! When every measured quantity depends on a single distinct state component
//! (selection-like `H`) and `R` is diagonal, all matrices stay diagonal and
//! the whole computation is linear in the dimensions.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{FilterError, Result};

/// Relative pivot floor for covariance factorizations: a pivot below
/// `PIVOT_RTOL` times the largest pivot fails the factorization outright.
/// The library never regularizes a near-singular covariance.
pub const PIVOT_RTOL: f64 = 1e-12;

/// A symmetric positive-definite matrix in dense or diagonal form.
#[derive(Debug, Clone)]
pub enum CovMatrix {
    /// Full `n x n` matrix.
    Dense(DMatrix<f64>),
    /// Diagonal entries only.
    Diagonal(DVector<f64>),
}

impl CovMatrix {
    /// Side length of the matrix.
    pub fn dim(&self) -> usize {
        match self {
            CovMatrix::Dense(m) => m.nrows(),
            CovMatrix::Diagonal(d) => d.len(),
        }
    }

    /// Materialize as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            CovMatrix::Dense(m) => m.clone(),
            CovMatrix::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    /// Quadratic form `v' M v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        match self {
            CovMatrix::Dense(m) => (v.transpose() * m * v)[(0, 0)],
            CovMatrix::Diagonal(d) => v.iter().zip(d.iter()).map(|(vi, di)| vi * vi * di).sum(),
        }
    }
}

/// Lower-triangular factor `L` with `Sigma = L L'`.
#[derive(Debug, Clone)]
pub enum CholFactor {
    /// Dense lower-triangular factor.
    Dense(DMatrix<f64>),
    /// Diagonal factor (square roots of the diagonal of `Sigma`).
    Diagonal(DVector<f64>),
}

impl CholFactor {
    /// `L * v`.
    pub fn mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            CholFactor::Dense(l) => l * v,
            CholFactor::Diagonal(d) => DVector::from_fn(d.len(), |i, _| d[i] * v[i]),
        }
    }

    /// `sum_i log L_ii = log det L` (valid because `L` is triangular with
    /// positive diagonal).
    pub fn logdet(&self) -> f64 {
        match self {
            CholFactor::Dense(l) => (0..l.nrows()).map(|i| l[(i, i)].ln()).sum(),
            CholFactor::Diagonal(d) => d.iter().map(|di| di.ln()).sum(),
        }
    }

    /// Materialize as a dense lower-triangular matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            CholFactor::Dense(l) => l.clone(),
            CholFactor::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }
}

/// The collapsed Gaussian-plus-remainder produced by [`complete_squares`].
#[derive(Debug, Clone)]
pub struct PseudoGaussian {
    /// Posterior precision `Sigma^{-1}`.
    pub sigma_inv: CovMatrix,
    /// Posterior mean.
    pub mean: DVector<f64>,
    /// Lower-triangular `L` with `Sigma = L L'`.
    pub chol: CholFactor,
    /// Scalar remainder `phi >= 0` left over after completing squares.
    pub phi: f64,
    /// Innovation covariance `K = H P H' + R`.
    pub innov_cov: CovMatrix,
}

/// Observation noise covariance accepted by the generalized entry point.
pub(crate) enum NoiseCov<'a> {
    /// Diagonal `R` given by its diagonal entries.
    Diag(&'a DVector<f64>),
    /// Dense symmetric positive-definite `R`.
    Dense(&'a DMatrix<f64>),
}

/// Collapse prior and linearized observation into a pseudo-Gaussian.
///
/// `prior_cov_diag` is the diagonal of the prior covariance (positive),
/// `obs_matrix` the dense `k x m` linearization `H`, `obs_noise_sq_diag`
/// the diagonal of the observation noise covariance (positive), and `z`
/// the linearized observation target.
pub fn complete_squares(
    prior_mean: &DVector<f64>,
    prior_cov_diag: &DVector<f64>,
    obs_matrix: &DMatrix<f64>,
    obs_noise_sq_diag: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<PseudoGaussian> {
    complete_squares_with_noise(prior_mean, prior_cov_diag, obs_matrix, NoiseCov::Diag(obs_noise_sq_diag), z)
}

/// Generalized completion with a possibly dense observation noise covariance.
/// Needed when an already-collapsed innovation covariance plays the role of
/// the noise (the two-step joint sampler folds one block into the other).
pub(crate) fn complete_squares_with_noise(
    prior_mean: &DVector<f64>,
    prior_cov_diag: &DVector<f64>,
    obs_matrix: &DMatrix<f64>,
    noise: NoiseCov<'_>,
    z: &DVector<f64>,
) -> Result<PseudoGaussian> {
    let m = prior_mean.len();
    let k = z.len();
    debug_assert_eq!(prior_cov_diag.len(), m);
    debug_assert_eq!(obs_matrix.nrows(), k);
    debug_assert_eq!(obs_matrix.ncols(), m);

    if prior_cov_diag.iter().any(|p| *p <= 0.0 || !p.is_finite()) {
        return Err(FilterError::SingularCovariance(
            "prior covariance diagonal must be positive and finite".into(),
        ));
    }

    if let NoiseCov::Diag(qsq) = noise {
        if qsq.iter().any(|q| *q <= 0.0 || !q.is_finite()) {
            return Err(FilterError::SingularCovariance(
                "observation noise variances must be positive and finite".into(),
            ));
        }
        if let Some(selection) = selection_structure(obs_matrix) {
            return complete_squares_selection(prior_mean, prior_cov_diag, obs_matrix, qsq, z, &selection);
        }
    }

    complete_squares_dense(prior_mean, prior_cov_diag, obs_matrix, noise, z)
}

/// Per-row column index of the single nonzero of a selection-like `H`;
/// `None` for an all-zero row. Returns `None` overall when any row or any
/// column holds more than one nonzero (then products like `H' R^{-1} H`
/// pick up off-diagonal terms and the diagonal shortcut is invalid).
fn selection_structure(obs_matrix: &DMatrix<f64>) -> Option<Vec<Option<usize>>> {
    let (k, m) = obs_matrix.shape();
    let mut row_col: Vec<Option<usize>> = vec![None; k];
    let mut col_used = vec![false; m];
    for r in 0..k {
        for c in 0..m {
            if obs_matrix[(r, c)] != 0.0 {
                if row_col[r].is_some() || col_used[c] {
                    return None;
                }
                row_col[r] = Some(c);
                col_used[c] = true;
            }
        }
    }
    Some(row_col)
}

fn complete_squares_selection(
    prior_mean: &DVector<f64>,
    prior_cov_diag: &DVector<f64>,
    obs_matrix: &DMatrix<f64>,
    obs_noise_sq_diag: &DVector<f64>,
    z: &DVector<f64>,
    row_col: &[Option<usize>],
) -> Result<PseudoGaussian> {
    let m = prior_mean.len();
    let k = z.len();

    let mut sigma_inv = DVector::from_fn(m, |i, _| 1.0 / prior_cov_diag[i]);
    let mut rhs = DVector::from_fn(m, |i, _| prior_mean[i] / prior_cov_diag[i]);
    let mut innov_cov = obs_noise_sq_diag.clone();
    let mut phi = 0.0;

    for r in 0..k {
        let innov;
        if let Some(c) = row_col[r] {
            let h = obs_matrix[(r, c)];
            sigma_inv[c] += h * h / obs_noise_sq_diag[r];
            rhs[c] += h * z[r] / obs_noise_sq_diag[r];
            innov_cov[r] += h * h * prior_cov_diag[c];
            innov = z[r] - h * prior_mean[c];
        } else {
            innov = z[r];
        }
        phi += 0.5 * innov * innov / innov_cov[r];
    }

    check_diag_pivots(&sigma_inv.map(|s| 1.0 / s), "posterior covariance")?;
    let mean = DVector::from_fn(m, |i, _| rhs[i] / sigma_inv[i]);
    let chol = CholFactor::Diagonal(sigma_inv.map(|s| (1.0 / s).sqrt()));

    Ok(PseudoGaussian {
        sigma_inv: CovMatrix::Diagonal(sigma_inv),
        mean,
        chol,
        phi,
        innov_cov: CovMatrix::Diagonal(innov_cov),
    })
}

fn complete_squares_dense(
    prior_mean: &DVector<f64>,
    prior_cov_diag: &DVector<f64>,
    obs_matrix: &DMatrix<f64>,
    noise: NoiseCov<'_>,
    z: &DVector<f64>,
) -> Result<PseudoGaussian> {
    let m = prior_mean.len();
    let k = z.len();

    // R^{-1} H and R^{-1} z, by row scaling (diagonal R) or a solve (dense R).
    let (noise_inv_h, noise_inv_z, noise_dense) = match noise {
        NoiseCov::Diag(qsq) => {
            let mut nih = obs_matrix.clone();
            let mut niz = z.clone();
            for r in 0..k {
                for c in 0..m {
                    nih[(r, c)] /= qsq[r];
                }
                niz[r] /= qsq[r];
            }
            (nih, niz, DMatrix::from_diagonal(qsq))
        }
        NoiseCov::Dense(rmat) => {
            let chol_r = spd_cholesky(rmat, "observation noise covariance")?;
            (chol_r.solve(obs_matrix), chol_r.solve(z), rmat.clone())
        }
    };

    let mut sigma_inv = obs_matrix.transpose() * &noise_inv_h;
    for i in 0..m {
        sigma_inv[(i, i)] += 1.0 / prior_cov_diag[i];
    }

    let mut rhs = obs_matrix.transpose() * &noise_inv_z;
    for i in 0..m {
        rhs[i] += prior_mean[i] / prior_cov_diag[i];
    }

    let chol_sigma_inv = spd_cholesky(&sigma_inv, "posterior precision")?;
    let mean = chol_sigma_inv.solve(&rhs);

    // Lower factor of Sigma itself (not of Sigma^{-1}); obtained from the
    // explicit inverse so that L is genuinely lower-triangular.
    let sigma = chol_sigma_inv.inverse();
    let chol_sigma = spd_cholesky(&sigma, "posterior covariance")?;
    let chol = CholFactor::Dense(chol_sigma.l());

    // Innovation covariance K = H P H' + R and remainder phi.
    let mut h_p = obs_matrix.clone();
    for c in 0..m {
        for r in 0..k {
            h_p[(r, c)] *= prior_cov_diag[c];
        }
    }
    let innov_cov = &h_p * obs_matrix.transpose() + noise_dense;
    let innov = z - obs_matrix * prior_mean;
    let phi = if k > 0 {
        let chol_k = spd_cholesky(&innov_cov, "innovation covariance")?;
        0.5 * innov.dot(&chol_k.solve(&innov))
    } else {
        0.0
    };

    Ok(PseudoGaussian {
        sigma_inv: CovMatrix::Dense(sigma_inv),
        mean,
        chol,
        phi,
        innov_cov: CovMatrix::Dense(innov_cov),
    })
}

/// Cholesky with a relative pivot floor; fails on non-SPD input or any
/// pivot below `PIVOT_RTOL` times the largest pivot.
fn spd_cholesky(matrix: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(FilterError::SingularCovariance(format!("{what} has non-finite entries")));
    }
    let chol = Cholesky::new(matrix.clone())
        .ok_or_else(|| FilterError::SingularCovariance(format!("{what} is not positive definite")))?;
    let l = chol.l_dirty();
    let mut max_pivot = 0.0_f64;
    let mut min_pivot = f64::INFINITY;
    for i in 0..matrix.nrows() {
        let pivot = l[(i, i)] * l[(i, i)];
        max_pivot = max_pivot.max(pivot);
        min_pivot = min_pivot.min(pivot);
    }
    if matrix.nrows() > 0 && min_pivot < PIVOT_RTOL * max_pivot {
        return Err(FilterError::SingularCovariance(format!(
            "{what} pivot ratio {:e} below threshold {PIVOT_RTOL:e}",
            min_pivot / max_pivot
        )));
    }
    Ok(chol)
}

/// Relative pivot check for diagonal covariances.
fn check_diag_pivots(cov_diag: &DVector<f64>, what: &str) -> Result<()> {
    let mut max_pivot = 0.0_f64;
    let mut min_pivot = f64::INFINITY;
    for &p in cov_diag.iter() {
        if p <= 0.0 || !p.is_finite() {
            return Err(FilterError::SingularCovariance(format!("{what} has a non-positive entry")));
        }
        max_pivot = max_pivot.max(p);
        min_pivot = min_pivot.min(p);
    }
    if !cov_diag.is_empty() && min_pivot < PIVOT_RTOL * max_pivot {
        return Err(FilterError::SingularCovariance(format!(
            "{what} pivot ratio {:e} below threshold {PIVOT_RTOL:e}",
            min_pivot / max_pivot
        )));
    }
    Ok(())
}

/// Map a reference Gaussian vector through the pseudo-Gaussian:
/// `x = mean + L xi`.
pub fn solve_reference(pg: &PseudoGaussian, xi: &DVector<f64>) -> DVector<f64> {
    &pg.mean + pg.chol.mul_vec(xi)
}

/// `log det L` of the pseudo-Gaussian's factor — the log volume scale of
/// the reference map, and the exact log sample-map determinant when the
/// observation map is linear.
pub fn chol_logdet(pg: &PseudoGaussian) -> f64 {
    pg.chol.logdet()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Direct evaluation of the left-hand side the completion rearranges:
    /// prior quadratic plus observation quadratic at x.
    fn two_term_quadratic(
        x: &DVector<f64>,
        prior_mean: &DVector<f64>,
        prior_cov_diag: &DVector<f64>,
        obs_matrix: &DMatrix<f64>,
        obs_noise_sq: &DVector<f64>,
        z: &DVector<f64>,
    ) -> f64 {
        let dp = x - prior_mean;
        let prior_term: f64 = dp
            .iter()
            .zip(prior_cov_diag.iter())
            .map(|(d, p)| d * d / p)
            .sum();
        let dz = obs_matrix * x - z;
        let obs_term: f64 = dz.iter().zip(obs_noise_sq.iter()).map(|(d, q)| d * d / q).sum();
        0.5 * (prior_term + obs_term)
    }

    fn collapsed_quadratic(pg: &PseudoGaussian, x: &DVector<f64>) -> f64 {
        let d = x - &pg.mean;
        0.5 * pg.sigma_inv.quad_form(&d) + pg.phi
    }

    #[test]
    fn scalar_example_matches_hand_computed_values() {
        // P = 4, H = 1, R = 1, prior = 1, z = 3:
        // Sigma^{-1} = 1/4 + 1 = 5/4, mean = (4/5)(1/4 + 3) = 2.6,
        // K = 4 + 1 = 5, phi = (3 - 1)^2 / (2 * 5) = 0.4.
        let pg = complete_squares(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 4.0),
            &DMatrix::from_element(1, 1, 1.0),
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 3.0),
        )
        .unwrap();
        assert_relative_eq!(pg.sigma_inv.to_dense()[(0, 0)], 1.25, max_relative = 1e-15);
        assert_relative_eq!(pg.mean[0], 2.6, max_relative = 1e-15);
        assert_relative_eq!(pg.innov_cov.to_dense()[(0, 0)], 5.0, max_relative = 1e-15);
        assert_relative_eq!(pg.phi, 0.4, max_relative = 1e-15);
    }

    #[test]
    fn identity_observation_of_zero_prior_gives_half_split() {
        // P = I, H = I, R = I, prior = 0, z = b: Sigma^{-1} = 2I, mean = b/2,
        // phi = b'b/4, log det L = -(d/2) log 2.
        let d = 10;
        let b = DVector::from_fn(d, |i, _| (i as f64 - 4.0) / 3.0);
        let pg = complete_squares(
            &DVector::zeros(d),
            &DVector::from_element(d, 1.0),
            &DMatrix::identity(d, d),
            &DVector::from_element(d, 1.0),
            &b,
        )
        .unwrap();
        assert!(matches!(pg.sigma_inv, CovMatrix::Diagonal(_)), "selection fast path expected");
        for i in 0..d {
            assert_relative_eq!(pg.sigma_inv.to_dense()[(i, i)], 2.0, max_relative = 1e-15);
            assert_relative_eq!(pg.mean[i], b[i] / 2.0, max_relative = 1e-15);
        }
        assert_relative_eq!(pg.phi, b.dot(&b) / 4.0, max_relative = 1e-13);
        assert_relative_eq!(chol_logdet(&pg), -(d as f64 / 2.0) * 2.0_f64.ln(), max_relative = 1e-13);
    }

    #[test]
    fn zero_observation_matrix_returns_the_prior() {
        // H = 0: Sigma = P, mean = prior, phi = z' R^{-1} z / 2.
        let prior = DVector::from_vec(vec![1.0, -2.0]);
        let cov = DVector::from_vec(vec![0.5, 2.0]);
        let z = DVector::from_vec(vec![3.0, 1.0]);
        let qsq = DVector::from_vec(vec![4.0, 1.0]);
        let pg = complete_squares(&prior, &cov, &DMatrix::zeros(2, 2), &qsq, &z).unwrap();
        assert_eq!(pg.mean, prior);
        assert_relative_eq!(pg.sigma_inv.to_dense()[(0, 0)], 2.0, max_relative = 1e-15);
        assert_relative_eq!(pg.sigma_inv.to_dense()[(1, 1)], 0.5, max_relative = 1e-15);
        assert_relative_eq!(pg.phi, 0.5 * (9.0 / 4.0 + 1.0), max_relative = 1e-15);
    }

    #[test]
    fn empty_observation_block_is_the_pure_prior() {
        let prior = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let cov = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let pg = complete_squares(
            &prior,
            &cov,
            &DMatrix::zeros(0, 3),
            &DVector::zeros(0),
            &DVector::zeros(0),
        )
        .unwrap();
        assert_eq!(pg.mean, prior);
        assert_eq!(pg.phi, 0.0);
        assert_relative_eq!(
            chol_logdet(&pg),
            0.5 * (1.0_f64.ln() + 2.0_f64.ln() + 3.0_f64.ln()),
            max_relative = 1e-14
        );
    }

    #[test]
    fn dense_h_takes_dense_path_and_reconstructs() {
        // One row observing two components: selection shortcut is invalid.
        let prior = DVector::from_vec(vec![0.5, -0.5]);
        let cov = DVector::from_vec(vec![1.0, 4.0]);
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let qsq = DVector::from_element(1, 2.0);
        let z = DVector::from_element(1, 1.0);
        let pg = complete_squares(&prior, &cov, &h, &qsq, &z).unwrap();
        assert!(matches!(pg.sigma_inv, CovMatrix::Dense(_)));
        for x in [
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, -2.0]),
            DVector::from_vec(vec![-0.7, 0.3]),
        ] {
            assert_relative_eq!(
                two_term_quadratic(&x, &prior, &cov, &h, &qsq, &z),
                collapsed_quadratic(&pg, &x),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn two_rows_observing_one_component_take_dense_path() {
        // A column with two nonzeros makes K non-diagonal.
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(selection_structure(&h).is_none());
    }

    #[test]
    fn solve_reference_maps_through_the_factor() {
        let prior = DVector::from_vec(vec![1.0, 1.0]);
        let cov = DVector::from_vec(vec![1.0, 1.0]);
        let pg = complete_squares(
            &prior,
            &cov,
            &DMatrix::identity(2, 2),
            &DVector::from_element(2, 1.0),
            &DVector::from_vec(vec![3.0, -1.0]),
        )
        .unwrap();
        let xi = DVector::from_vec(vec![1.0, -2.0]);
        let x = solve_reference(&pg, &xi);
        // The factor maps the reference quadratic onto the posterior one.
        let d = &x - &pg.mean;
        assert_relative_eq!(pg.sigma_inv.quad_form(&d), xi.dot(&xi), max_relative = 1e-12);
    }

    #[test]
    fn singular_inputs_fail_instead_of_regularizing() {
        let bad_cov = complete_squares(
            &DVector::zeros(1),
            &DVector::from_element(1, 0.0),
            &DMatrix::identity(1, 1),
            &DVector::from_element(1, 1.0),
            &DVector::zeros(1),
        );
        assert!(matches!(bad_cov, Err(FilterError::SingularCovariance(_))));

        // Pivot ratio below threshold: variances 1 and 1e-14.
        let skewed = complete_squares(
            &DVector::zeros(2),
            &DVector::from_vec(vec![1.0, 1e-14]),
            &DMatrix::zeros(0, 2),
            &DVector::zeros(0),
            &DVector::zeros(0),
        );
        assert!(matches!(skewed, Err(FilterError::SingularCovariance(_))));
    }

    proptest! {
        /// The rearrangement is an identity in x: both sides agree at
        /// arbitrary evaluation points for arbitrary well-posed inputs.
        #[test]
        fn completion_is_an_identity_in_x(
            prior in prop::collection::vec(-5.0_f64..5.0, 3),
            cov in prop::collection::vec(0.1_f64..5.0, 3),
            h_entries in prop::collection::vec(-2.0_f64..2.0, 6),
            qsq in prop::collection::vec(0.1_f64..5.0, 2),
            z in prop::collection::vec(-5.0_f64..5.0, 2),
            x in prop::collection::vec(-8.0_f64..8.0, 3),
        ) {
            let prior = DVector::from_vec(prior);
            let cov = DVector::from_vec(cov);
            let h = DMatrix::from_row_slice(2, 3, &h_entries);
            let qsq = DVector::from_vec(qsq);
            let z = DVector::from_vec(z);
            let x = DVector::from_vec(x);
            let pg = complete_squares(&prior, &cov, &h, &qsq, &z).unwrap();
            let lhs = two_term_quadratic(&x, &prior, &cov, &h, &qsq, &z);
            let rhs = collapsed_quadratic(&pg, &x);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
            prop_assert!(pg.phi >= 0.0);
        }

        /// phi is unchanged by reordering observation components (with the
        /// matching permutation of H rows, z, and the noise diagonal).
        #[test]
        fn phi_is_invariant_under_observation_reordering(
            h_entries in prop::collection::vec(-2.0_f64..2.0, 6),
            qsq in prop::collection::vec(0.1_f64..5.0, 3),
            z in prop::collection::vec(-5.0_f64..5.0, 3),
        ) {
            let prior = DVector::from_vec(vec![0.4, -1.2]);
            let cov = DVector::from_vec(vec![1.5, 0.7]);
            let h = DMatrix::from_row_slice(3, 2, &h_entries);
            let qsq = DVector::from_vec(qsq);
            let z = DVector::from_vec(z);
            let pg = complete_squares(&prior, &cov, &h, &qsq, &z).unwrap();

            // Reverse the observation order.
            let perm: Vec<usize> = (0..3).rev().collect();
            let h_p = DMatrix::from_fn(3, 2, |r, c| h[(perm[r], c)]);
            let qsq_p = DVector::from_fn(3, |r, _| qsq[perm[r]]);
            let z_p = DVector::from_fn(3, |r, _| z[perm[r]]);
            let pg_p = complete_squares(&prior, &cov, &h_p, &qsq_p, &z_p).unwrap();

            prop_assert!((pg.phi - pg_p.phi).abs() <= 1e-10 * (1.0 + pg.phi.abs()));
        }
    }
}

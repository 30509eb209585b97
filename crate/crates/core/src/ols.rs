//! Dense least squares per arm, with exact leave-one-out downdates.
//!
//! Fits go through a thin QR factorization `U = QR`. The factor gives the
//! coefficients, the leverages (`h_jj = ‖Q_j‖²`) and `(UᵀU)⁻¹ = R⁻¹R⁻ᵀ`, which is
//! what the Sherman–Morrison deletion formula needs:
//!
//! ```text
//! coef_(−j) = coef − (UᵀU)⁻¹ u_j e_j / (1 − h_jj)
//! ```

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Reciprocal condition number below which a design is rejected.
pub const RCOND_THRESHOLD: f64 = 1e-10;

/// Leverage margin: deleting row `j` requires `h_jj < 1 − LEVERAGE_EPS`.
pub const LEVERAGE_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OlsError {
    #[error("design is rank deficient (reciprocal condition {rcond:e})")]
    RankDeficient { rcond: f64 },
    #[error("design has {cols} columns but only {rows} rows; need cols <= rows - 1")]
    Underdetermined { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row {row} has leverage {leverage}; deleting it leaves the fit undefined")]
    LeverageOne { row: usize, leverage: f64 },
    #[error("deleting row {row} makes the design rank deficient (reciprocal condition {rcond:e})")]
    DowndateRankLoss { row: usize, rcond: f64 },
    #[error("row index {row} out of range for {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
}

/// An `n × p` design with at least one column and `p ≤ n − 1`.
///
/// Rank is checked when fitting, where the QR factor is already at hand.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, OlsError> {
        let (rows, cols) = matrix.shape();
        if cols == 0 || cols + 1 > rows {
            return Err(OlsError::Underdetermined { rows, cols });
        }
        Ok(Self(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, OlsError> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(OlsError::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, j: usize) -> DVector<f64> {
        self.0.row(j).transpose()
    }
}

/// Least-squares fit of one arm under one candidate basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    /// `UᵀU`, kept to check downdated ranks.
    pub gram: DMatrix<f64>,
    /// `(UᵀU)⁻¹`.
    pub gram_inverse: DMatrix<f64>,
    pub hat_diag: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// Reciprocal condition number of the design.
    pub rcond: f64,
}

/// Reciprocal 2-norm condition number from singular values.
fn rcond_of(singular: &DVector<f64>) -> f64 {
    let max = singular.max();
    let min = singular.min();
    if max > 0.0 && max.is_finite() {
        min / max
    } else {
        0.0
    }
}

pub fn fit_ols(design: &DesignMatrix, y: &DVector<f64>) -> Result<OlsFit, OlsError> {
    let u = design.matrix();
    let (n, p) = u.shape();
    if y.len() != n {
        return Err(OlsError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }

    let qr = u.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rcond = rcond_of(&r.singular_values());
    if rcond < RCOND_THRESHOLD {
        return Err(OlsError::RankDeficient { rcond });
    }

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(OlsError::RankDeficient { rcond })?;
    let coef = &r_inv * (q.transpose() * y);
    let gram_inverse = &r_inv * r_inv.transpose();
    let hat_diag = DVector::from_iterator(n, q.row_iter().map(|row| row.norm_squared()));
    let residuals = y - u * &coef;
    let rss = residuals.norm_squared();

    Ok(OlsFit {
        coef,
        gram: u.transpose() * u,
        gram_inverse,
        hat_diag,
        residuals,
        rss,
        rcond,
    })
}

/// `uᵀ·coef`.
pub fn predict(fit: &OlsFit, u: &[f64]) -> Result<f64, OlsError> {
    if u.len() != fit.coef.len() {
        return Err(OlsError::DimensionMismatch {
            expected: fit.coef.len(),
            got: u.len(),
        });
    }
    Ok(u.iter().zip(fit.coef.iter()).map(|(a, b)| a * b).sum())
}

/// Coefficients of the fit with row `j` deleted, by rank-one downdate.
pub fn loo_coef(fit: &OlsFit, design: &DesignMatrix, j: usize) -> Result<DVector<f64>, OlsError> {
    let rows = design.nrows();
    if j >= rows {
        return Err(OlsError::RowOutOfRange { row: j, rows });
    }
    let h = fit.hat_diag[j];
    if h >= 1.0 - LEVERAGE_EPS {
        return Err(OlsError::LeverageOne { row: j, leverage: h });
    }
    let u_j = design.row(j);

    // The remaining rows must still span all p directions.
    let downdated = &fit.gram - &u_j * u_j.transpose();
    let eig = downdated.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let rcond = if hi > 0.0 && lo > 0.0 { (lo / hi).sqrt() } else { 0.0 };
    if rcond < RCOND_THRESHOLD {
        return Err(OlsError::DowndateRankLoss { row: j, rcond });
    }

    let scale = fit.residuals[j] / (1.0 - h);
    Ok(&fit.coef - (&fit.gram_inverse * u_j) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent refit through the normal equations, rows `skip` removed.
    fn brute_force(u: &DMatrix<f64>, y: &DVector<f64>, skip: Option<usize>) -> DVector<f64> {
        let keep: Vec<usize> = (0..u.nrows()).filter(|&i| Some(i) != skip).collect();
        let us = DMatrix::from_fn(keep.len(), u.ncols(), |i, j| u[(keep[i], j)]);
        let ys = DVector::from_fn(keep.len(), |i, _| y[keep[i]]);
        let xtx = us.transpose() * &us;
        xtx.cholesky().unwrap().solve(&(us.transpose() * ys))
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, j| if j == 0 { 1.0 } else { rng.random_range(-2.0..2.0) })
    }

    #[test]
    fn intercept_only_is_mean() {
        let d = DesignMatrix::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let fit = fit_ols(&d, &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(fit.coef[0], 2.0, epsilon = 1e-14);
        assert_relative_eq!(fit.rss, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn orthonormal_design_gives_projection() {
        let s = 0.5f64.sqrt();
        let u = DMatrix::from_row_slice(4, 2, &[s, 0.0, s, 0.0, 0.0, s, 0.0, s]);
        let y = DVector::from_vec(vec![1.0, -2.0, 3.0, 0.5]);
        let fit = fit_ols(&DesignMatrix::new(u.clone()).unwrap(), &y).unwrap();
        let expected = u.transpose() * &y;
        assert_relative_eq!(fit.coef, expected, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = random_design(&mut rng, 20, 3);
        let beta = DVector::from_vec(vec![0.7, -1.3, 2.2]);
        let y = &u * &beta;
        let fit = fit_ols(&DesignMatrix::new(u).unwrap(), &y).unwrap();
        assert_relative_eq!(fit.coef, beta, epsilon = 1e-10);
    }

    #[test]
    fn rejects_collinear_and_underdetermined() {
        let u = DMatrix::from_fn(6, 2, |i, _| i as f64);
        let err = fit_ols(&DesignMatrix::new(u).unwrap(), &DVector::zeros(6)).unwrap_err();
        assert!(matches!(err, OlsError::RankDeficient { .. }));
        let err = DesignMatrix::new(DMatrix::from_element(2, 2, 1.0)).unwrap_err();
        assert_eq!(err, OlsError::Underdetermined { rows: 2, cols: 2 });
    }

    #[test]
    fn predict_examples() {
        let d = DesignMatrix::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0])).unwrap();
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0]);
        let fit = fit_ols(&d, &y).unwrap();
        assert_relative_eq!(predict(&fit, &[3.0, 4.0]).unwrap(), 3.0 + 8.0, epsilon = 1e-12);
        let mut zero = fit.clone();
        zero.coef.fill(0.0);
        assert_eq!(predict(&zero, &[3.0, 4.0]).unwrap(), 0.0);
        assert!(matches!(
            predict(&fit, &[1.0]),
            Err(OlsError::DimensionMismatch { expected: 2, got: 1 })
        ));
        // fitted values
        let fitted = d.matrix() * &fit.coef;
        for j in 0..3 {
            let row: Vec<f64> = d.row(j).iter().copied().collect();
            assert_relative_eq!(predict(&fit, &row).unwrap(), fitted[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn loo_intercept_only() {
        let d = DesignMatrix::new(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let fit = fit_ols(&d, &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let c = loo_coef(&fit, &d, 0).unwrap();
        assert_relative_eq!(c[0], 2.5, epsilon = 1e-14);
    }

    #[test]
    fn loo_zero_residual_is_inert() {
        // y = 1 + x exactly at row 1, perturbed elsewhere
        let d = DesignMatrix::new(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0],
        ))
        .unwrap();
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let fit = fit_ols(&d, &y).unwrap();
        let c = loo_coef(&fit, &d, 1).unwrap();
        assert_relative_eq!(c, fit.coef, epsilon = 1e-12);
    }

    #[test]
    fn loo_matches_refit_15x2() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_design(&mut rng, 15, 2);
        let y = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let d = DesignMatrix::new(u.clone()).unwrap();
        let fit = fit_ols(&d, &y).unwrap();
        for j in 0..15 {
            let fast = loo_coef(&fit, &d, j).unwrap();
            let slow = brute_force(&u, &y, Some(j));
            assert_relative_eq!(fast, slow, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn leverage_one_is_rejected() {
        // Row 2 is the only one touching the second column.
        let d = DesignMatrix::new(DMatrix::from_row_slice(
            4,
            2,
            &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0],
        ))
        .unwrap();
        let fit = fit_ols(&d, &DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(matches!(loo_coef(&fit, &d, 2), Err(OlsError::LeverageOne { row: 2, .. })));
        assert!(matches!(loo_coef(&fit, &d, 9), Err(OlsError::RowOutOfRange { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fit_invariants_and_downdates(seed in any::<u64>(), n in 5usize..=50, p in 1usize..=4) {
            prop_assume!(p + 1 <= n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_design(&mut rng, n, p);
            let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let d = DesignMatrix::new(u.clone()).unwrap();
            let fit = match fit_ols(&d, &y) {
                Ok(f) => f,
                Err(OlsError::RankDeficient { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            prop_assert!((fit.hat_diag.sum() - p as f64).abs() < 1e-8);
            for &h in fit.hat_diag.iter() {
                prop_assert!(h >= -1e-14 && h < 1.0 + 1e-12);
            }
            let normal = u.transpose() * (&y - &u * &fit.coef);
            let scale = (u.transpose() * &y).amax().max(1e-300);
            prop_assert!(normal.amax() < 1e-8 * scale.max(1.0));
            for j in 0..n {
                match loo_coef(&fit, &d, j) {
                    Ok(fast) => {
                        let slow = brute_force(&u, &y, Some(j));
                        for k in 0..p {
                            let denom = slow[k].abs().max(1.0);
                            prop_assert!((fast[k] - slow[k]).abs() / denom < 1e-8);
                        }
                    }
                    Err(OlsError::LeverageOne { .. }) | Err(OlsError::DowndateRankLoss { .. }) => {}
                    Err(e) => panic!("{e}"),
                }
            }
        }

        #[test]
        fn predict_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_design(&mut rng, 10, 3);
            let y = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
            let fit = fit_ols(&DesignMatrix::new(u).unwrap(), &y).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mix: Vec<f64> = x.iter().zip(&z).map(|(p, q)| a * p + b * q).collect();
            let lhs = predict(&fit, &mix).unwrap();
            let rhs = a * predict(&fit, &x).unwrap() + b * predict(&fit, &z).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }
}

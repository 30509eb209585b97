use nalgebra::{DMatrix, DVector};

use super::{fit_candidates, CandidateFit, CandidateSpec, JmaError, WeightVector};
use crate::dataset::Dataset;
use crate::matching::MatchedPairSet;
use crate::ols::loo_coef;

/// Leave-pair-out predictions and paired pseudo-responses.
///
/// Row `m` of `delta_tilde` holds, for every candidate, the effect at the
/// treated member `u_mᵗ` predicted with the treated member removed from the
/// treated-arm fit and the control member removed from the control-arm fit.
/// `y_tilde[m] = Y_mᵗ − Y_mᶜ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JackknifeSystem {
    pub delta_tilde: DMatrix<f64>,
    pub y_tilde: DVector<f64>,
    pub pairs: MatchedPairSet,
}

impl JackknifeSystem {
    /// Builds a system from raw parts, checking shapes and finiteness.
    pub fn from_parts(
        delta_tilde: DMatrix<f64>,
        y_tilde: DVector<f64>,
        pairs: MatchedPairSet,
    ) -> Result<Self, JmaError> {
        if delta_tilde.nrows() != y_tilde.len() {
            return Err(JmaError::DimensionMismatch {
                expected: delta_tilde.nrows(),
                got: y_tilde.len(),
            });
        }
        if delta_tilde.nrows() == 0 || delta_tilde.ncols() == 0 {
            return Err(JmaError::EmptySystem {
                rows: delta_tilde.nrows(),
                cols: delta_tilde.ncols(),
            });
        }
        if delta_tilde.iter().chain(y_tilde.iter()).any(|v| !v.is_finite()) {
            return Err(JmaError::NonFinite("jackknife system"));
        }
        Ok(Self {
            delta_tilde,
            y_tilde,
            pairs,
        })
    }

    /// Assembles the system from full-sample fits using rank-one downdates.
    pub fn from_fits(
        data: &Dataset,
        fits: &[CandidateFit],
        pairs: &MatchedPairSet,
    ) -> Result<Self, JmaError> {
        if fits.is_empty() {
            return Err(JmaError::NoCandidates);
        }
        let arms = data.arms();
        let m_count = pairs.len();
        let mut delta_tilde = DMatrix::zeros(m_count, fits.len());
        let mut basis = Vec::new();

        for (m, pair) in pairs.pairs.iter().enumerate() {
            let t_row = arms.local_index(pair.treated);
            let c_row = arms.local_index(pair.control);
            let u_t = data.row(pair.treated);
            for (k, cf) in fits.iter().enumerate() {
                let deletion = |arm, source| JmaError::Deletion {
                    pair: m,
                    candidate: cf.spec.id,
                    arm,
                    source,
                };
                let beta = loo_coef(&cf.treated.fit, &cf.treated.design, t_row)
                    .map_err(|e| deletion("treated", e))?;
                let gamma = loo_coef(&cf.control.fit, &cf.control.design, c_row)
                    .map_err(|e| deletion("control", e))?;
                basis.clear();
                cf.spec.check_dims(u_t.len())?;
                cf.spec.expand_into(&u_t, &mut basis);
                delta_tilde[(m, k)] = basis
                    .iter()
                    .zip(beta.iter().zip(gamma.iter()))
                    .map(|(u, (b, g))| u * (b - g))
                    .sum();
            }
        }

        let y = data.response();
        let y_tilde = DVector::from_iterator(
            m_count,
            pairs.pairs.iter().map(|p| y[p.treated] - y[p.control]),
        );
        Self::from_parts(delta_tilde, y_tilde, pairs.clone())
    }

    pub fn n_pairs(&self) -> usize {
        self.delta_tilde.nrows()
    }

    pub fn n_candidates(&self) -> usize {
        self.delta_tilde.ncols()
    }
}

pub fn build_jackknife_system(
    data: &Dataset,
    specs: &[CandidateSpec],
    pairs: &MatchedPairSet,
) -> Result<JackknifeSystem, JmaError> {
    let fits = fit_candidates(data, specs)?;
    JackknifeSystem::from_fits(data, &fits, pairs)
}

/// `CV(w) = ‖Δ̃ w − Ỹ‖²`.
pub fn cv_value(w: &WeightVector, sys: &JackknifeSystem) -> Result<f64, JmaError> {
    if w.len() != sys.n_candidates() {
        return Err(JmaError::DimensionMismatch {
            expected: sys.n_candidates(),
            got: w.len(),
        });
    }
    let weights = w.as_slice();
    Ok(sys
        .delta_tilde
        .row_iter()
        .zip(sys.y_tilde.iter())
        .map(|(row, y)| {
            let fitted: f64 = row.iter().zip(weights).map(|(a, b)| a * b).sum();
            (fitted - y).powi(2)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::MatchedPair;
    use approx::assert_relative_eq;

    fn single_pair(treated: usize, control: usize) -> MatchedPairSet {
        MatchedPairSet {
            pairs: vec![MatchedPair {
                treated,
                control,
                cell: vec![0],
            }],
            side_length: 1.0,
            skipped_cells: 0,
            occupied_cells: 1,
        }
    }

    #[test]
    fn hand_computed_intercept_only() {
        // treated y = (1, 2, 3), control y = (0, 0, 3); pair = (treated y=1, control y=3)
        let x = DMatrix::from_column_slice(6, 1, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let t = vec![true, true, true, false, false, false];
        let y = vec![1.0, 2.0, 3.0, 0.0, 0.0, 3.0];
        let data = Dataset::new(x, t, y).unwrap();
        let spec = CandidateSpec::new(0, true, vec![]).unwrap();
        let sys = build_jackknife_system(&data, &[spec], &single_pair(0, 5)).unwrap();
        assert_relative_eq!(sys.delta_tilde[(0, 0)], 2.5, epsilon = 1e-14);
        assert_relative_eq!(sys.y_tilde[0], -2.0);
    }

    #[test]
    fn zero_residual_pair_gives_full_sample_estimate() {
        // Both arms lie exactly on lines; every residual is zero.
        let xs = [0.0, 1.0, 2.0, 3.0, 0.5, 1.5, 2.5, 3.5];
        let x = DMatrix::from_column_slice(8, 1, &xs);
        let t = vec![true, true, true, true, false, false, false, false];
        let y: Vec<f64> = xs
            .iter()
            .zip(&t)
            .map(|(&u, &tr)| if tr { 1.0 + 2.0 * u } else { -1.0 + 0.5 * u })
            .collect();
        let data = Dataset::new(x, t, y).unwrap();
        let spec = CandidateSpec::linear(0, &[0]);
        let sys = build_jackknife_system(&data, &[spec.clone()], &single_pair(1, 5)).unwrap();
        let full = crate::jma::delta_hat(&data, &spec, &[1.0]).unwrap();
        assert_relative_eq!(sys.delta_tilde[(0, 0)], full, epsilon = 1e-12);
    }

    #[test]
    fn cv_examples() {
        let pairs = single_pair(0, 1);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 1.0]);
        let sys = JackknifeSystem::from_parts(a, DVector::from_vec(vec![0.5, 1.5]), pairs).unwrap();
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(cv_value(&w, &sys).unwrap(), 0.0);
        let v = WeightVector::vertex(0, 2);
        assert_relative_eq!(cv_value(&v, &sys).unwrap(), 0.25 + 0.25);
        assert!(matches!(
            cv_value(&WeightVector::vertex(0, 3), &sys),
            Err(JmaError::DimensionMismatch { .. })
        ));
    }
}

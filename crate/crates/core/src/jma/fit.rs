use nalgebra::{DMatrix, DVector};

use super::{CandidateSpec, JmaError};
use crate::dataset::{ArmSplit, Dataset};
use crate::ols::{fit_ols, DesignMatrix, OlsFit};

/// One arm's regression under one candidate basis.
#[derive(Debug, Clone)]
pub struct ArmFit {
    pub design: DesignMatrix,
    pub fit: OlsFit,
}

impl ArmFit {
    fn new(
        spec: &CandidateSpec,
        data: &Dataset,
        rows: &[usize],
        arm: &'static str,
    ) -> Result<Self, JmaError> {
        let design = spec.design(data.covariates(), rows, arm)?;
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.response()[i]));
        let fit = fit_ols(&design, &y).map_err(|source| JmaError::Fit {
            candidate: spec.id,
            arm,
            source,
        })?;
        Ok(Self { design, fit })
    }

    #[inline]
    fn dot(coef: &DVector<f64>, basis: &[f64]) -> f64 {
        basis.iter().zip(coef.iter()).map(|(a, b)| a * b).sum()
    }
}

/// Both arm fits of a candidate on the full sample.
#[derive(Debug, Clone)]
pub struct CandidateFit {
    pub spec: CandidateSpec,
    pub treated: ArmFit,
    pub control: ArmFit,
}

impl CandidateFit {
    pub fn new(spec: &CandidateSpec, data: &Dataset, arms: &ArmSplit) -> Result<Self, JmaError> {
        Ok(Self {
            spec: spec.clone(),
            treated: ArmFit::new(spec, data, &arms.treated, "treated")?,
            control: ArmFit::new(spec, data, &arms.control, "control")?,
        })
    }

    /// `Δ̂ᵏ(u) = u^kᵀβ̂ᵏ − u^kᵀγ̂ᵏ`.
    pub fn delta(&self, u_raw: &[f64]) -> Result<f64, JmaError> {
        let basis = self.spec.expand(u_raw)?;
        Ok(self.delta_at_basis(&basis))
    }

    pub(crate) fn delta_at_basis(&self, basis: &[f64]) -> f64 {
        ArmFit::dot(&self.treated.fit.coef, basis) - ArmFit::dot(&self.control.fit.coef, basis)
    }

    /// Effect estimates at every row of `points` (raw covariates).
    pub fn delta_many(&self, points: &DMatrix<f64>) -> Result<Vec<f64>, JmaError> {
        self.spec.check_dims(points.ncols())?;
        let mut raw = vec![0.0; points.ncols()];
        let mut basis = Vec::with_capacity(self.spec.n_columns());
        Ok((0..points.nrows())
            .map(|i| {
                for (j, v) in raw.iter_mut().enumerate() {
                    *v = points[(i, j)];
                }
                basis.clear();
                self.spec.expand_into(&raw, &mut basis);
                self.delta_at_basis(&basis)
            })
            .collect())
    }

    pub fn p(&self) -> usize {
        self.spec.n_columns()
    }
}

pub fn fit_candidates(data: &Dataset, specs: &[CandidateSpec]) -> Result<Vec<CandidateFit>, JmaError> {
    if specs.is_empty() {
        return Err(JmaError::NoCandidates);
    }
    let arms = data.arms();
    specs.iter().map(|s| CandidateFit::new(s, data, &arms)).collect()
}

/// Full-sample effect estimate of one candidate at `u_raw`.
pub fn delta_hat(data: &Dataset, spec: &CandidateSpec, u_raw: &[f64]) -> Result<f64, JmaError> {
    CandidateFit::new(spec, data, &data.arms())?.delta(u_raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jma::Term;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_arms_give_zero() {
        // Same covariates and responses in both arms.
        let x = DMatrix::from_row_slice(8, 1, &[0.1, 0.5, 0.9, 1.3, 0.1, 0.5, 0.9, 1.3]);
        let y = vec![1.0, 2.5, 2.0, 4.0, 1.0, 2.5, 2.0, 4.0];
        let t = vec![true, true, true, true, false, false, false, false];
        let data = Dataset::new(x, t, y).unwrap();
        let spec = CandidateSpec::linear(0, &[0]);
        for u in [-1.0, 0.0, 0.7, 3.0] {
            assert!(delta_hat(&data, &spec, &[u]).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn noiseless_linear_effect_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        // f_c = 1 + 2 u2, f_t = f_c + u1
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * x[(i, 1)] + if t[i] { x[(i, 0)] } else { 0.0 })
            .collect();
        let data = Dataset::new(x, t, y).unwrap();
        let spec = CandidateSpec::new(0, true, vec![Term::Linear(0), Term::Linear(1)]).unwrap();
        for u in [[0.3, -0.2], [1.5, 2.0], [-0.7, 0.0]] {
            assert_relative_eq!(delta_hat(&data, &spec, &u).unwrap(), u[0], epsilon = 1e-10);
        }
    }
}

use nalgebra::DMatrix;

use super::{CandidateFit, JmaError, WeightVector};

/// Averaged effect estimates at a set of covariate vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CateEstimate {
    /// `Δ̂(u_i; w) = Σ_k w_k Δ̂ᵏ(u_i)`.
    pub values: Vec<f64>,
    /// `N × K` full-sample per-candidate estimates `Δ̂ᵏ(u_i)`.
    pub per_model: DMatrix<f64>,
    pub weights: WeightVector,
}

/// `N × K` matrix of full-sample per-candidate effect estimates.
pub fn per_model_estimates(fits: &[CandidateFit], points: &DMatrix<f64>) -> Result<DMatrix<f64>, JmaError> {
    if fits.is_empty() {
        return Err(JmaError::NoCandidates);
    }
    let mut out = DMatrix::zeros(points.nrows(), fits.len());
    for (k, fit) in fits.iter().enumerate() {
        let col = fit.delta_many(points)?;
        out.column_mut(k).copy_from_slice(&col);
    }
    Ok(out)
}

/// Row-wise weighted sum of a per-model estimate matrix.
pub fn combine(per_model: &DMatrix<f64>, w: &WeightVector) -> Result<Vec<f64>, JmaError> {
    if per_model.ncols() != w.len() {
        return Err(JmaError::DimensionMismatch {
            expected: per_model.ncols(),
            got: w.len(),
        });
    }
    let weights = w.as_slice();
    Ok(per_model
        .row_iter()
        .map(|row| row.iter().zip(weights).map(|(d, wk)| d * wk).sum())
        .collect())
}

/// The averaging estimator at `points` (raw covariates, one row per point).
pub fn jma_estimate(
    fits: &[CandidateFit],
    w: &WeightVector,
    points: &DMatrix<f64>,
) -> Result<CateEstimate, JmaError> {
    let per_model = per_model_estimates(fits, points)?;
    let values = combine(&per_model, w)?;
    Ok(CateEstimate {
        values,
        per_model,
        weights: w.clone(),
    })
}

//! Competing estimators sharing the candidate fits: AIC/BIC selection,
//! smoothed AIC/BIC averaging and TECV (vertex) selection.
//!
//! Information criteria sum per-arm Gaussian profile likelihoods, since the
//! arms are fit independently. Each arm counts `p_k` coefficients plus one
//! error variance.

use std::f64::consts::PI;

use crate::jma::{cv_value, CandidateFit, JackknifeSystem, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoScores {
    pub aic: f64,
    pub bic: f64,
    /// Some arm had a zero residual sum of squares; both scores are −∞.
    pub zero_residual: bool,
}

/// Summed two-arm AIC and BIC of one candidate.
pub fn information_scores(fit: &CandidateFit) -> InfoScores {
    let k = (fit.p() + 1) as f64;
    let mut aic = 0.0;
    let mut bic = 0.0;
    let mut zero_residual = false;
    for arm in [&fit.treated, &fit.control] {
        let n = arm.design.nrows() as f64;
        let rss = arm.fit.rss;
        if rss <= 0.0 {
            zero_residual = true;
            continue;
        }
        let neg2_loglik = n * ((2.0 * PI * rss / n).ln() + 1.0);
        aic += neg2_loglik + 2.0 * k;
        bic += neg2_loglik + n.ln() * k;
    }
    if zero_residual {
        aic = f64::NEG_INFINITY;
        bic = f64::NEG_INFINITY;
    }
    InfoScores {
        aic,
        bic,
        zero_residual,
    }
}

/// Per-candidate scores, including the TECV criterion at each vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub aic: Vec<f64>,
    pub bic: Vec<f64>,
    pub tecv: Vec<f64>,
}

impl ScoreTable {
    pub fn new(fits: &[CandidateFit], sys: &JackknifeSystem) -> Self {
        let info: Vec<InfoScores> = fits.iter().map(information_scores).collect();
        Self {
            aic: info.iter().map(|s| s.aic).collect(),
            bic: info.iter().map(|s| s.bic).collect(),
            tecv: vertex_criteria(sys),
        }
    }
}

/// `exp(−(s_k − s_min)/2)`, normalized. `−∞` scores share all the weight;
/// `+∞` scores get none.
pub fn smoothed_weights(scores: &[f64]) -> WeightVector {
    assert!(!scores.is_empty(), "need at least one score");
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = if min == f64::NEG_INFINITY {
        scores.iter().map(|&s| if s == f64::NEG_INFINITY { 1.0 } else { 0.0 }).collect()
    } else if min == f64::INFINITY {
        vec![1.0; scores.len()]
    } else {
        scores.iter().map(|&s| (-(s - min) / 2.0).exp()).collect()
    };
    let total: f64 = raw.iter().sum();
    WeightVector::new(raw.iter().map(|r| r / total).collect()).expect("normalized exponential weights")
}

/// Index of the smallest score; ties go to the smallest index.
pub fn select_min(scores: &[f64]) -> usize {
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s < scores[best] {
            best = k;
        }
    }
    best
}

/// `CV(e_k)` for every candidate `k`.
pub fn vertex_criteria(sys: &JackknifeSystem) -> Vec<f64> {
    let k = sys.n_candidates();
    (0..k)
        .map(|j| cv_value(&WeightVector::vertex(j, k), sys).expect("vertex matches system width"))
        .collect()
}

/// TECV: the candidate whose jackknife column best fits the pseudo-responses.
pub fn tecv_select(sys: &JackknifeSystem) -> usize {
    select_min(&vertex_criteria(sys))
}

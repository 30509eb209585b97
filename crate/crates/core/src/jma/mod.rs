//! Jackknife model averaging over candidate linear models.

mod candidate;
mod estimate;
mod fit;
mod jackknife;
pub mod simplex;

use thiserror::Error;

use crate::ols::OlsError;

pub use candidate::{CandidateSpec, Term};
pub use estimate::{combine, jma_estimate, per_model_estimates, CateEstimate};
pub use fit::{delta_hat, fit_candidates, CandidateFit};
pub use jackknife::{build_jackknife_system, cv_value, JackknifeSystem};
pub use simplex::{project_onto_simplex, solve_weights, SolverOptions, WeightSolution, WeightVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JmaError {
    #[error("candidate {id}: {reason}")]
    InvalidCandidate { id: usize, reason: String },
    #[error("candidate {candidate} references covariate index {index} but data has {p} covariates")]
    IndexOutOfRange {
        candidate: usize,
        index: usize,
        p: usize,
    },
    #[error("candidate {candidate}, {arm} arm: {source}")]
    Fit {
        candidate: usize,
        arm: &'static str,
        #[source]
        source: OlsError,
    },
    #[error("pair {pair}, candidate {candidate}, {arm} arm: {source}")]
    Deletion {
        pair: usize,
        candidate: usize,
        arm: &'static str,
        #[source]
        source: OlsError,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weights do not lie on the simplex: {0}")]
    NotOnSimplex(String),
    #[error("empty system: {rows} rows, {cols} candidates")]
    EmptySystem { rows: usize, cols: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no candidate models given")]
    NoCandidates,
}

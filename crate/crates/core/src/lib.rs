//! Conditional average treatment effect (CATE) estimation by jackknife model
//! averaging over linear candidate models.
//!
//! The pipeline, end to end:
//!
//! 1. Fit every [`CandidateSpec`] by least squares separately in the treated and
//!    control arms ([`ols`]).
//! 2. Scale the matching covariates to the unit cube, tile it into cells of side
//!    `h` and draw one treated/control pair per cell ([`matching`]). The paired
//!    response difference is a noisy pseudo-observation of the effect.
//! 3. For every pair and candidate, predict the effect at the treated member
//!    with the pair deleted from both arm fits (rank-one downdates), giving the
//!    jackknife matrix ([`jma::JackknifeSystem`]).
//! 4. Choose weights on the probability simplex minimizing the squared distance
//!    between the averaged jackknife predictions and the pseudo-observations
//!    ([`jma::solve_weights`]), then average the full-sample estimates.
//!
//! [`baselines`] holds the AIC/BIC/smoothed/TECV competitors and [`sim`] the
//! heteroscedastic data generators used by the simulation harness.

pub mod baselines;
pub mod dataset;
pub mod jma;
pub mod matching;
pub mod ols;
pub mod sim;

pub use dataset::{ArmSplit, Dataset, DatasetError};
pub use jma::{
    CandidateFit, CandidateSpec, CateEstimate, JackknifeSystem, JmaError, Term, WeightSolution,
    WeightVector,
};
pub use matching::{CubeTransform, MatchError, MatchedPair, MatchedPairSet};
pub use ols::{DesignMatrix, OlsError, OlsFit};

//! Heteroscedastic two-arm data generators, signal calibration, and the
//! risk metrics used to score estimators.
//!
//! Covariates `(u1, u2, u3, u4)` are zero-mean Gaussian with
//! `Cov(u_k, u_j) = ρ^|k−j|`, treatment is a fair coin, and
//!
//! ```text
//! f_t(u) = c (0.5 u1² + 0.5 u2 + 0.5 u1 + 0.5 u2²)
//! f_c(u) = c (0.5 u1² + 0.5 u2)
//! Δ(u)   = c (0.5 u1 + 0.5 u2²)
//! ```
//!
//! Error design 1 draws both arms' errors from `N(0, 9 u2²)`; design 2 draws
//! treated errors from `N(0, 16 u2²)` and control errors from `N(0, 4 u1²)`.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::dataset::{Dataset, DatasetError};
use crate::jma::simplex::solve_simplex_least_squares;
use crate::jma::{CandidateSpec, JmaError, SolverOptions, Term, WeightSolution};

/// Number of covariates the generators produce.
pub const N_COVARIATES: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("could not bracket c for target R² = {target}")]
    CalibrationFailed { target: f64 },
    #[error("dimension mismatch: {estimates} estimates vs {truth} true values")]
    DimensionMismatch { estimates: usize, truth: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Jma(#[from] JmaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorDesign {
    One,
    Two,
}

impl ErrorDesign {
    pub fn number(self) -> u8 {
        match self {
            ErrorDesign::One => 1,
            ErrorDesign::Two => 2,
        }
    }

    /// Conditional error standard deviations `(σ_t(u), σ_c(u))`.
    pub fn sd(self, u: &[f64]) -> (f64, f64) {
        match self {
            ErrorDesign::One => (3.0 * u[1].abs(), 3.0 * u[1].abs()),
            ErrorDesign::Two => (4.0 * u[1].abs(), 2.0 * u[0].abs()),
        }
    }
}

impl TryFrom<u8> for ErrorDesign {
    type Error = SimError;

    fn try_from(v: u8) -> Result<Self, SimError> {
        match v {
            1 => Ok(ErrorDesign::One),
            2 => Ok(ErrorDesign::Two),
            _ => Err(SimError::InvalidConfig(format!("error design must be 1 or 2, got {v}"))),
        }
    }
}

/// Which candidate set a study uses: all-misspecified (1) or first-correct (2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Example {
    One,
    Two,
}

impl TryFrom<u8> for Example {
    type Error = SimError;

    fn try_from(v: u8) -> Result<Self, SimError> {
        match v {
            1 => Ok(Example::One),
            2 => Ok(Example::Two),
            _ => Err(SimError::InvalidConfig(format!("example must be 1 or 2, got {v}"))),
        }
    }
}

/// The treatment effect `Δ(u) = c (0.5 u1 + 0.5 u2²)` and its arm means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueEffect {
    pub c: f64,
}

impl TrueEffect {
    pub fn f_treated(&self, u: &[f64]) -> f64 {
        self.c * (0.5 * u[0] * u[0] + 0.5 * u[1] + 0.5 * u[0] + 0.5 * u[1] * u[1])
    }

    pub fn f_control(&self, u: &[f64]) -> f64 {
        self.c * (0.5 * u[0] * u[0] + 0.5 * u[1])
    }

    pub fn eval(&self, u: &[f64]) -> f64 {
        self.c * (0.5 * u[0] + 0.5 * u[1] * u[1])
    }

    pub fn eval_rows(&self, points: &DMatrix<f64>) -> Vec<f64> {
        (0..points.nrows())
            .map(|i| self.eval(&[points[(i, 0)], points[(i, 1)]]))
            .collect()
    }
}

/// The data-generating process for a fixed `(ρ, design, c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dgp {
    pub rho: f64,
    pub design: ErrorDesign,
    pub effect: TrueEffect,
    chol: Matrix4<f64>,
}

impl Dgp {
    pub fn new(rho: f64, design: ErrorDesign, c: f64) -> Result<Self, SimError> {
        if !(rho > -1.0 && rho < 1.0) || !c.is_finite() {
            return Err(SimError::InvalidConfig(format!("need |rho| < 1 and finite c (rho = {rho}, c = {c})")));
        }
        let cov = Matrix4::from_fn(|k, j| rho.powi((k as i32 - j as i32).abs()));
        let chol = cov
            .cholesky()
            .ok_or_else(|| SimError::InvalidConfig(format!("covariance not positive definite for rho = {rho}")))?
            .l();
        Ok(Self {
            rho,
            design,
            effect: TrueEffect { c },
            chol,
        })
    }

    fn draw_u<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 4] {
        let z = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let u = self.chol * z;
        [u[0], u[1], u[2], u[3]]
    }

    /// `n × 4` covariate draws.
    pub fn covariates<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let mut x = DMatrix::zeros(n, N_COVARIATES);
        for i in 0..n {
            let u = self.draw_u(rng);
            for (j, v) in u.iter().enumerate() {
                x[(i, j)] = *v;
            }
        }
        x
    }

    /// One sample of size `n`; returns the dataset and `Δ` at each row.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(Dataset, Vec<f64>), SimError> {
        let mut x = DMatrix::zeros(n, N_COVARIATES);
        let mut t = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let u = self.draw_u(rng);
            let treated = rng.random_bool(0.5);
            let z: f64 = rng.sample(StandardNormal);
            let (sd_t, sd_c) = self.design.sd(&u);
            let yi = if treated {
                self.effect.f_treated(&u) + sd_t * z
            } else {
                self.effect.f_control(&u) + sd_c * z
            };
            for (j, v) in u.iter().enumerate() {
                x[(i, j)] = *v;
            }
            t.push(treated);
            y.push(yi);
            truth.push(self.effect.eval(&u));
        }
        Ok((Dataset::new(x, t, y)?, truth))
    }
}

/// One cell of a simulation study.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub rho: f64,
    pub design: ErrorDesign,
    /// Target signal strength in `(0, 1)`.
    pub r2: f64,
    /// Signal scale, normally from [`calibrate_c`].
    pub c: f64,
    pub seed: u64,
    pub n_eval: usize,
    pub reps: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.r2 > 0.0 && self.r2 < 1.0) {
            return Err(SimError::InvalidConfig(format!("r2 must lie in (0, 1), got {}", self.r2)));
        }
        if self.n < 20 {
            return Err(SimError::InvalidConfig(format!("n must be at least 20, got {}", self.n)));
        }
        if self.n_eval == 0 {
            return Err(SimError::InvalidConfig("n_eval must be at least 1".into()));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(SimError::InvalidConfig(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        Ok(())
    }

    pub fn dgp(&self) -> Result<Dgp, SimError> {
        Dgp::new(self.rho, self.design, self.c)
    }
}

/// A training sample plus fresh evaluation points, with `Δ` at both.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: Dataset,
    pub truth_sample: Vec<f64>,
    pub eval_points: DMatrix<f64>,
    pub truth_eval: Vec<f64>,
}

/// Draws the training sample, then `n_eval` evaluation points, from one rng.
pub fn generate_example1<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<GeneratedData, SimError> {
    cfg.validate()?;
    let dgp = cfg.dgp()?;
    let (dataset, truth_sample) = dgp.sample(cfg.n, rng)?;
    let eval_points = dgp.covariates(cfg.n_eval, rng);
    let truth_eval = dgp.effect.eval_rows(&eval_points);
    Ok(GeneratedData {
        dataset,
        truth_sample,
        eval_points,
        truth_eval,
    })
}

/// Sample moments of the unit-scale signal `g` (Y at c = 1 minus noise) and
/// the noise `e`, so that `Var(Y(c)) = c² Var g + 2c Cov(g, e) + Var e`.
#[derive(Debug, Clone, Copy)]
struct SignalMoments {
    var_g: f64,
    cov_ge: f64,
    var_e: f64,
}

impl SignalMoments {
    fn draw<R: Rng + ?Sized>(rho: f64, design: ErrorDesign, n: usize, rng: &mut R) -> Result<Self, SimError> {
        let dgp = Dgp::new(rho, design, 1.0)?;
        let (mut sg, mut se, mut sgg, mut see, mut sge) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let u = dgp.draw_u(rng);
            let treated = rng.random_bool(0.5);
            let z: f64 = rng.sample(StandardNormal);
            let (sd_t, sd_c) = design.sd(&u);
            let (g, e) = if treated {
                (dgp.effect.f_treated(&u), sd_t * z)
            } else {
                (dgp.effect.f_control(&u), sd_c * z)
            };
            sg += g;
            se += e;
            sgg += g * g;
            see += e * e;
            sge += g * e;
        }
        let nf = n as f64;
        let denom = nf - 1.0;
        Ok(Self {
            var_g: (sgg - sg * sg / nf) / denom,
            cov_ge: (sge - sg * se / nf) / denom,
            var_e: (see - se * se / nf) / denom,
        })
    }

    fn r2(&self, c: f64) -> f64 {
        let var_y = c * c * self.var_g + 2.0 * c * self.cov_ge + self.var_e;
        (var_y - self.var_e) / var_y
    }
}

/// Monte Carlo `R² = [Var Y − Var(noise)] / Var Y` at signal scale `c`.
pub fn empirical_r2<R: Rng + ?Sized>(
    c: f64,
    rho: f64,
    design: ErrorDesign,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64, SimError> {
    if n_mc < 2 {
        return Err(SimError::InvalidConfig("need at least 2 Monte Carlo draws".into()));
    }
    Ok(SignalMoments::draw(rho, design, n_mc, rng)?.r2(c))
}

/// Finds `c > 0` whose Monte Carlo `R²` (common draws) is within `tol` of the
/// target, by bisection.
pub fn calibrate_c<R: Rng + ?Sized>(
    target_r2: f64,
    rho: f64,
    design: ErrorDesign,
    n_mc: usize,
    tol: f64,
    rng: &mut R,
) -> Result<f64, SimError> {
    if !(target_r2 > 0.0 && target_r2 < 1.0) {
        return Err(SimError::InvalidConfig(format!("target R² must lie in (0, 1), got {target_r2}")));
    }
    if n_mc < 2 {
        return Err(SimError::InvalidConfig("need at least 2 Monte Carlo draws".into()));
    }
    let moments = SignalMoments::draw(rho, design, n_mc, rng)?;
    let failed = SimError::CalibrationFailed { target: target_r2 };

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while moments.r2(hi) < target_r2 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(failed);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = moments.r2(mid);
        if (r - target_r2).abs() <= tol * 1e-3 {
            return Ok(mid);
        }
        if r < target_r2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    if (moments.r2(c) - target_r2).abs() <= tol {
        Ok(c)
    } else {
        Err(failed)
    }
}

/// Average squared error `mean((Δ̂ − Δ)²)`.
pub fn ase(estimates: &[f64], truth: &[f64]) -> Result<f64, SimError> {
    if estimates.len() != truth.len() || truth.is_empty() {
        return Err(SimError::DimensionMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
        });
    }
    let sum: f64 = estimates.iter().zip(truth).map(|(e, t)| (e - t).powi(2)).sum();
    Ok(sum / truth.len() as f64)
}

/// The infeasible best averaging estimator on a set of evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFit {
    pub solution: WeightSolution,
    /// ASE of the oracle average; the risk normalizer.
    pub ase: f64,
    /// The normalizer is (numerically) zero; normalized risks are undefined.
    pub normalizer_zero: bool,
}

/// Simplex weights minimizing `‖Σ_k w_k Δ̂ᵏ − Δ‖²` over the evaluation points.
pub fn oracle_weights(
    per_model: &DMatrix<f64>,
    truth: &[f64],
    opts: &SolverOptions,
) -> Result<OracleFit, SimError> {
    if per_model.nrows() != truth.len() {
        return Err(SimError::DimensionMismatch {
            estimates: per_model.nrows(),
            truth: truth.len(),
        });
    }
    let target = DVector::from_column_slice(truth);
    let solution = solve_simplex_least_squares(per_model, &target, opts)?;
    let ase = solution.objective / truth.len() as f64;
    let scale = truth.iter().map(|t| t * t).sum::<f64>() / truth.len() as f64;
    Ok(OracleFit {
        normalizer_zero: ase <= 1e-20 * scale.max(1e-300),
        solution,
        ase,
    })
}

/// The fixed candidate sets of the two simulation examples.
///
/// Example 1 uses four linear specs that all miss the quadratic terms of `Δ`.
/// Example 2 puts the correct quadratic spec first, followed by three
/// misspecified ones.
pub fn default_candidates(example: Example) -> Vec<CandidateSpec> {
    match example {
        Example::One => vec![
            CandidateSpec::linear(0, &[0]),
            CandidateSpec::linear(1, &[1]),
            CandidateSpec::linear(2, &[0, 1]),
            CandidateSpec::linear(3, &[0, 1, 2, 3]),
        ],
        Example::Two => vec![
            CandidateSpec::new(
                0,
                true,
                vec![Term::Linear(0), Term::Linear(1), Term::Square(0), Term::Square(1)],
            )
            .expect("distinct terms"),
            CandidateSpec::linear(1, &[0]),
            CandidateSpec::linear(2, &[1, 2]),
            CandidateSpec::linear(3, &[2, 3]),
        ],
    }
}

/// Number of leading candidates in a set that are correctly specified.
pub fn correct_candidates(example: Example) -> usize {
    match example {
        Example::One => 0,
        Example::Two => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jma::{fit_candidates, per_model_estimates, WeightVector};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(c: f64) -> SimConfig {
        SimConfig {
            n: 200,
            rho: 0.0,
            design: ErrorDesign::One,
            r2: 0.5,
            c,
            seed: 1,
            n_eval: 50,
            reps: 1,
        }
    }

    #[test]
    fn null_signal() {
        let g = generate_example1(&cfg(0.0), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(g.truth_sample.iter().chain(&g.truth_eval).all(|&d| d == 0.0));
        // Y is pure noise: its sign is symmetric and |Y| tracks 3|u2|.
        let y = g.dataset.response();
        assert!(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0));
    }

    #[test]
    fn effect_scales_linearly_and_vanishes_at_origin() {
        let e = TrueEffect { c: 2.5 };
        assert_eq!(e.eval(&[0.0, 0.0, 0.0, 0.0]), 0.0);
        let a = generate_example1(&cfg(1.0), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = generate_example1(&cfg(2.0), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        for (x, y) in a.truth_eval.iter().zip(&b.truth_eval) {
            assert_eq!(2.0 * x, *y);
        }
        assert_eq!(a.eval_points, b.eval_points);
    }

    #[test]
    fn seeded_determinism() {
        let a = generate_example1(&cfg(1.0), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = generate_example1(&cfg(1.0), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.truth_eval, b.truth_eval);
    }

    #[test]
    fn independent_covariates_at_rho_zero() {
        let dgp = Dgp::new(0.0, ErrorDesign::One, 1.0).unwrap();
        let n = 100_000;
        let x = dgp.covariates(n, &mut ChaCha8Rng::seed_from_u64(12));
        let mean = x.row_mean();
        let centered = DMatrix::from_fn(n, 4, |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        for k in 0..4 {
            for j in 0..4 {
                let target = if k == j { 1.0 } else { 0.0 };
                // 5 standard errors of a sample covariance at n = 1e5
                assert!((cov[(k, j)] - target).abs() < 0.02, "cov[{k},{j}] = {}", cov[(k, j)]);
            }
        }
    }

    #[test]
    fn correlated_covariates() {
        let dgp = Dgp::new(0.5, ErrorDesign::One, 1.0).unwrap();
        let x = dgp.covariates(100_000, &mut ChaCha8Rng::seed_from_u64(13));
        let c = |a: usize, b: usize| x.column(a).dot(&x.column(b)) / 100_000.0;
        assert!((c(0, 1) - 0.5).abs() < 0.02);
        assert!((c(0, 2) - 0.25).abs() < 0.02);
        assert!((c(0, 3) - 0.125).abs() < 0.02);
    }

    /// Error variance at u2 ≈ 1 from residuals against the known arm means.
    fn conditional_error_variance(design: ErrorDesign, treated_arm: bool, u_idx: usize, target_u: f64) -> f64 {
        let dgp = Dgp::new(0.0, design, 1.0).unwrap();
        let (data, _) = dgp.sample(1_000_000, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let mut acc = 0.0;
        let mut w = 0.0;
        for i in 0..data.n() {
            if data.treated()[i] != treated_arm {
                continue;
            }
            let u = data.row(i);
            if (u[u_idx].abs() - target_u).abs() > 0.02 {
                continue;
            }
            let mean = if treated_arm {
                dgp.effect.f_treated(&u)
            } else {
                dgp.effect.f_control(&u)
            };
            // rescale each draw to |u| = target exactly
            let e = (data.response()[i] - mean) * target_u / u[u_idx].abs();
            acc += e * e;
            w += 1.0;
        }
        acc / w
    }

    #[test]
    fn design_one_variance_at_unit_u2() {
        let v = conditional_error_variance(ErrorDesign::One, true, 1, 1.0);
        assert!((v - 9.0).abs() / 9.0 < 0.05, "variance {v}");
        let v = conditional_error_variance(ErrorDesign::One, false, 1, 1.0);
        assert!((v - 9.0).abs() / 9.0 < 0.05, "variance {v}");
    }

    #[test]
    fn design_two_variances() {
        let v = conditional_error_variance(ErrorDesign::Two, true, 1, 1.0);
        assert!((v - 16.0).abs() / 16.0 < 0.05, "variance {v}");
        let v = conditional_error_variance(ErrorDesign::Two, false, 0, 1.0);
        assert!((v - 4.0).abs() / 4.0 < 0.05, "variance {v}");
    }

    #[test]
    fn calibration_is_monotone_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c3 = calibrate_c(0.3, 0.0, ErrorDesign::One, 200_000, 5e-3, &mut rng).unwrap();
        let c9 = calibrate_c(0.9, 0.0, ErrorDesign::One, 200_000, 5e-3, &mut rng).unwrap();
        assert!(c9 > c3);
        let tiny = calibrate_c(1e-4, 0.0, ErrorDesign::One, 200_000, 1e-5, &mut rng).unwrap();
        assert!(tiny < 0.1 * c3);
        let check = empirical_r2(c9, 0.0, ErrorDesign::One, 200_000, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!((check - 0.9).abs() < 0.01);
    }

    #[test]
    fn ase_examples() {
        assert_eq!(ase(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(ase(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap(), 0.25);
        assert_relative_eq!(ase(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 5.0);
        assert!(ase(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn oracle_examples() {
        let truth = vec![1.0, 2.0, 3.0];
        let per_model = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 2.0, 1.0, 3.0]);
        let o = oracle_weights(&per_model, &truth, &SolverOptions::default()).unwrap();
        assert_relative_eq!(o.solution.weights.as_slice()[1], 1.0, epsilon = 1e-12);
        assert!(o.normalizer_zero);
        let single = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.0]);
        let o = oracle_weights(&single, &truth, &SolverOptions::default()).unwrap();
        assert_eq!(o.solution.weights, WeightVector::vertex(0, 1));
        assert_relative_eq!(o.ase, 14.0 / 3.0);
        assert!(!o.normalizer_zero);
    }

    #[test]
    fn candidate_sets() {
        assert_eq!(default_candidates(Example::One).len(), 4);
        assert_eq!(default_candidates(Example::Two).len(), 4);
    }

    #[test]
    fn correct_spec_recovers_noiseless_effect() {
        let dgp = Dgp::new(0.3, ErrorDesign::One, 1.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = dgp.covariates(100, &mut rng);
        let t: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let y: Vec<f64> = (0..100)
            .map(|i| {
                let u = [x[(i, 0)], x[(i, 1)], x[(i, 2)], x[(i, 3)]];
                if t[i] {
                    dgp.effect.f_treated(&u)
                } else {
                    dgp.effect.f_control(&u)
                }
            })
            .collect();
        let data = Dataset::new(x, t, y).unwrap();
        let specs = default_candidates(Example::Two);
        let fits = fit_candidates(&data, &specs[..1]).unwrap();
        let pts = dgp.covariates(20, &mut rng);
        let est = per_model_estimates(&fits, &pts).unwrap();
        let truth = dgp.effect.eval_rows(&pts);
        for i in 0..20 {
            assert_relative_eq!(est[(i, 0)], truth[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn misspecified_specs_keep_approximation_error() {
        // Noiseless large-n fit: residual effect error stays bounded away from 0.
        let dgp = Dgp::new(0.0, ErrorDesign::One, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let n = 20_000;
        let x = dgp.covariates(n, &mut rng);
        let t: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let u = [x[(i, 0)], x[(i, 1)], x[(i, 2)], x[(i, 3)]];
                if t[i] {
                    dgp.effect.f_treated(&u)
                } else {
                    dgp.effect.f_control(&u)
                }
            })
            .collect();
        let data = Dataset::new(x, t, y).unwrap();
        let fits = fit_candidates(&data, &default_candidates(Example::One)).unwrap();
        let pts = dgp.covariates(5_000, &mut rng);
        let est = per_model_estimates(&fits, &pts).unwrap();
        let truth = dgp.effect.eval_rows(&pts);
        for k in 0..4 {
            let col: Vec<f64> = est.column(k).iter().copied().collect();
            // Δ keeps 0.5 u2², whose variance 0.5 no linear basis can absorb.
            assert!(ase(&col, &truth).unwrap() > 0.1);
        }
    }
}

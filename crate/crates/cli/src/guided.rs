//! Guided simulation: regenerate responses from a designated "true" candidate
//! fitted on real covariates and treatments, then score every method.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use cate_jma::{CandidateFit, CandidateSpec, Dataset};

use crate::config::{Cell, Guided};
use crate::error::{CliError, EstimationError};
use crate::seeds::guided_seed;
use crate::study::{score_replication, thread_pool, Replication, MAX_ATTEMPTS};

/// The fitted "true" process: per-observation means, effects and noise scales.
#[derive(Debug, Clone)]
pub struct TrueProcess {
    pub fitted: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma2_treated: f64,
    pub sigma2_control: f64,
}

fn arm_mean(fit: &CandidateFit, treated: bool, u: &[f64]) -> Result<f64, EstimationError> {
    let basis = fit.spec.expand(u)?;
    let coef = if treated { &fit.treated.fit.coef } else { &fit.control.fit.coef };
    Ok(basis.iter().zip(coef.iter()).map(|(b, c)| b * c).sum())
}

impl TrueProcess {
    /// Fits `spec` per arm. The error variance is the pooled residual variance,
    /// per-arm variances when `per_arm`, or `sigma2` when given.
    pub fn fit(data: &Dataset, spec: &CandidateSpec, per_arm: bool, sigma2: Option<f64>) -> Result<Self, EstimationError> {
        let fit = CandidateFit::new(spec, data, &data.arms())?;
        let mut fitted = Vec::with_capacity(data.n());
        let mut delta = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let u = data.row(i);
            fitted.push(arm_mean(&fit, data.treated()[i], &u)?);
            delta.push(fit.delta(&u)?);
        }
        let p = fit.p() as f64;
        let (rss_t, rss_c) = (fit.treated.fit.rss, fit.control.fit.rss);
        let (n_t, n_c) = (fit.treated.design.nrows() as f64, fit.control.design.nrows() as f64);
        let (sigma2_treated, sigma2_control) = match (sigma2, per_arm) {
            (Some(s), _) => (s, s),
            (None, true) => (rss_t / (n_t - p), rss_c / (n_c - p)),
            (None, false) => {
                let pooled = (rss_t + rss_c) / (n_t + n_c - 2.0 * p);
                (pooled, pooled)
            }
        };
        Ok(Self {
            fitted,
            delta,
            sigma2_treated,
            sigma2_control,
        })
    }

    /// Fresh responses `fitted + a_i σ z_i` with `a_i ~ U(0.5, 1.5)`; also
    /// returns the mean of `a_i²`.
    pub fn draw_response<R: Rng + ?Sized>(&self, treated: &[bool], rng: &mut R) -> (Vec<f64>, f64) {
        let mut sum_a2 = 0.0;
        let y = self
            .fitted
            .iter()
            .zip(treated)
            .map(|(&f, &t)| {
                let a: f64 = rng.random_range(0.5..1.5);
                let z: f64 = rng.sample(StandardNormal);
                sum_a2 += a * a;
                let s2 = if t { self.sigma2_treated } else { self.sigma2_control };
                f + a * s2.sqrt() * z
            })
            .collect();
        (y, sum_a2 / self.fitted.len() as f64)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GuidedDetails {
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub true_model: usize,
    pub sigma2_treated: f64,
    pub sigma2_control: f64,
    /// Mean noise-variance multiplier `a_i²` per replication.
    pub mean_multiplier: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GuidedResult {
    pub replications: Vec<Replication>,
    pub details: GuidedDetails,
}

pub fn run_guided(
    cfg: &Guided,
    data: &Dataset,
    specs: &[CandidateSpec],
    threads: usize,
) -> Result<GuidedResult, CliError> {
    if cfg.true_model > specs.len() {
        return Err(CliError::Config(format!(
            "true_model = {} but only {} candidates",
            cfg.true_model,
            specs.len()
        )));
    }
    for s in specs {
        s.check_dims(data.p()).map_err(|e| CliError::Candidates(e.to_string()))?;
    }
    cfg.tuning.check_dims(data.p())?;
    let truth = TrueProcess::fit(data, &specs[cfg.true_model - 1], cfg.per_arm_variance, cfg.sigma2)
        .map_err(|e| CliError::estimation(format!("fitting true model {}", cfg.true_model), e))?;
    let points: DMatrix<f64> = data.covariates().clone();
    let cell = Cell {
        n: data.n(),
        r2: f64::NAN,
        rho: f64::NAN,
        design: 0,
    };
    let match_opts = cfg.tuning.match_options();
    let solver = cfg.tuning.solver();
    let pool = thread_pool(threads)?;
    let outcomes: Vec<(Replication, f64)> = pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|rep| {
                let mut last_err = None;
                for attempt in 0..MAX_ATTEMPTS {
                    let seed = guided_seed(cfg.seed, rep, attempt);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let (y, multiplier) = truth.draw_response(data.treated(), &mut rng);
                    let sample = data.with_response(y).map_err(EstimationError::from);
                    let scored = sample.and_then(|d| {
                        score_replication(&d, specs, &points, &truth.delta, 0, &match_opts, &solver, &mut rng)
                    });
                    match scored {
                        Ok(s) => return Ok((Replication::new(cell, rep, attempt, seed, s), multiplier)),
                        Err(e) => last_err = Some(e),
                    }
                }
                Err(CliError::estimation(
                    format!("guided rep {rep}: all {MAX_ATTEMPTS} attempts failed"),
                    last_err.expect("at least one attempt"),
                ))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let (replications, mean_multiplier): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let n_treated = data.treated().iter().filter(|&&t| t).count();
    Ok(GuidedResult {
        replications,
        details: GuidedDetails {
            n: data.n(),
            n_treated,
            n_control: data.n() - n_treated,
            true_model: cfg.true_model,
            sigma2_treated: truth.sigma2_treated,
            sigma2_control: truth.sigma2_control,
            mean_multiplier,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 60;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let y = (0..n)
            .map(|i| 1.0 + x[(i, 0)] + if t[i] { 2.0 * x[(i, 1)] } else { 0.0 } + rng.random_range(-0.3..0.3))
            .collect();
        Dataset::new(x, t, y).unwrap()
    }

    #[test]
    fn pooled_and_per_arm_variances() {
        let data = toy();
        let spec = CandidateSpec::linear(0, &[0, 1]);
        let fit = CandidateFit::new(&spec, &data, &data.arms()).unwrap();
        let pooled = TrueProcess::fit(&data, &spec, false, None).unwrap();
        assert_relative_eq!(
            pooled.sigma2_treated,
            (fit.treated.fit.rss + fit.control.fit.rss) / (60.0 - 6.0),
            epsilon = 1e-12
        );
        let arm = TrueProcess::fit(&data, &spec, true, None).unwrap();
        assert_relative_eq!(arm.sigma2_treated, fit.treated.fit.rss / 27.0, epsilon = 1e-12);
        assert_relative_eq!(arm.sigma2_control, fit.control.fit.rss / 27.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_variance_reproduces_fitted_values() {
        let data = toy();
        let spec = CandidateSpec::linear(0, &[0, 1]);
        let p = TrueProcess::fit(&data, &spec, false, Some(0.0)).unwrap();
        let (y, _) = p.draw_response(data.treated(), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(y, p.fitted);
    }

    #[test]
    fn multiplier_moment() {
        // E[a²] for a ~ U(0.5, 1.5) is 13/12; the sample mean of 7200 draws
        // has standard error below 0.005.
        let data = toy();
        let p = TrueProcess::fit(&data, &CandidateSpec::linear(0, &[0]), false, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let means: Vec<f64> = (0..120).map(|_| p.draw_response(data.treated(), &mut rng).1).collect();
        let overall = means.iter().sum::<f64>() / means.len() as f64;
        assert!((overall - 13.0 / 12.0).abs() < 0.015, "{overall}");
    }
}

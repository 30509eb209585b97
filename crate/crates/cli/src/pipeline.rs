//! One full estimation run: fit, match, jackknife, weigh, and score all methods.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use cate_jma::baselines::{select_min, smoothed_weights, ScoreTable};
use cate_jma::jma::{combine, fit_candidates, per_model_estimates, solve_weights, SolverOptions};
use cate_jma::matching::{adaptive_match, default_side_length, fit_cube_transform};
use cate_jma::sim::{ase, oracle_weights, OracleFit};
use cate_jma::{CandidateFit, CandidateSpec, CubeTransform, Dataset, JackknifeSystem, WeightSolution, WeightVector};

use crate::error::EstimationError;

/// Matching settings; `None` means the data-driven default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOptions {
    pub side_length: Option<f64>,
    /// Zero-based covariate indices used for matching.
    pub dims: Option<Vec<usize>>,
    pub min_pairs: Option<usize>,
}

/// Matching dimensions: the override, or every covariate some candidate uses.
pub fn match_dims(specs: &[CandidateSpec], opts: &MatchOptions) -> Vec<usize> {
    match &opts.dims {
        Some(d) => d.clone(),
        None => {
            let mut all = std::collections::BTreeSet::new();
            for s in specs {
                all.extend(s.raw_covariates());
            }
            all.into_iter().collect()
        }
    }
}

#[derive(Debug, Clone)]
pub struct JmaRun {
    pub fits: Vec<CandidateFit>,
    pub transform: CubeTransform,
    pub system: JackknifeSystem,
    pub solution: WeightSolution,
}

/// Runs the averaging pipeline; `rng` only drives the pair draws.
pub fn run_jma<R: Rng + ?Sized>(
    data: &Dataset,
    specs: &[CandidateSpec],
    match_opts: &MatchOptions,
    solver: &SolverOptions,
    rng: &mut R,
) -> Result<JmaRun, EstimationError> {
    let fits = fit_candidates(data, specs)?;
    let dims = match_dims(specs, match_opts);
    let transform = fit_cube_transform(data.covariates(), &dims)?;
    let scaled = transform.apply(data.covariates());
    let h = match_opts
        .side_length
        .unwrap_or_else(|| default_side_length(data.n(), dims.len()));
    let min_pairs = match_opts.min_pairs.unwrap_or(specs.len());
    let pairs = adaptive_match(&scaled, data.treated(), h, min_pairs, rng)?;
    let system = JackknifeSystem::from_fits(data, &fits, &pairs)?;
    let solution = solve_weights(&system, solver)?;
    Ok(JmaRun {
        fits,
        transform,
        system,
        solution,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Method {
    Jma,
    Aic,
    Bic,
    Saic,
    Sbic,
    Tecv,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Jma, Method::Aic, Method::Bic, Method::Saic, Method::Sbic, Method::Tecv];

    pub fn name(self) -> &'static str {
        match self {
            Method::Jma => "JMA",
            Method::Aic => "AIC",
            Method::Bic => "BIC",
            Method::Saic => "SAIC",
            Method::Sbic => "SBIC",
            Method::Tecv => "TECV",
        }
    }
}

/// Weights of every method, in [`Method::ALL`] order.
pub fn method_weights(run: &JmaRun) -> Vec<(Method, WeightVector)> {
    let scores = ScoreTable::new(&run.fits, &run.system);
    let k = run.fits.len();
    vec![
        (Method::Jma, run.solution.weights.clone()),
        (Method::Aic, WeightVector::vertex(select_min(&scores.aic), k)),
        (Method::Bic, WeightVector::vertex(select_min(&scores.bic), k)),
        (Method::Saic, smoothed_weights(&scores.aic)),
        (Method::Sbic, smoothed_weights(&scores.bic)),
        (Method::Tecv, WeightVector::vertex(select_min(&scores.tecv), k)),
    ]
}

/// Risk of every method, every single candidate and the oracle average.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub method_ase: Vec<(Method, f64)>,
    pub candidate_ase: Vec<f64>,
    pub oracle: OracleFit,
}

pub fn evaluate(
    run: &JmaRun,
    weights: &[(Method, WeightVector)],
    points: &DMatrix<f64>,
    truth: &[f64],
    solver: &SolverOptions,
) -> Result<Evaluation, EstimationError> {
    let per_model = per_model_estimates(&run.fits, points)?;
    let mut method_ase = Vec::with_capacity(weights.len());
    for (m, w) in weights {
        method_ase.push((*m, ase(&combine(&per_model, w)?, truth)?));
    }
    let candidate_ase = (0..per_model.ncols())
        .map(|k| ase(per_model.column(k).as_slice(), truth))
        .collect::<Result<Vec<_>, _>>()?;
    let oracle = oracle_weights(&per_model, truth, solver)?;
    Ok(Evaluation {
        method_ase,
        candidate_ase,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cate_jma::jma::cv_value;
    use cate_jma::sim::{default_candidates, generate_example1, ErrorDesign, Example, SimConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(seed: u64) -> cate_jma::sim::GeneratedData {
        let cfg = SimConfig {
            n: 200,
            rho: 0.0,
            design: ErrorDesign::One,
            r2: 0.5,
            c: 1.0,
            seed,
            n_eval: 500,
            reps: 1,
        };
        generate_example1(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn default_dims_are_candidate_union() {
        let specs = default_candidates(Example::One);
        assert_eq!(match_dims(&specs, &MatchOptions::default()), vec![0, 1, 2, 3]);
        assert_eq!(match_dims(&specs[..2], &MatchOptions::default()), vec![0, 1]);
    }

    #[test]
    fn jma_dominates_tecv_in_criterion_and_oracle_bounds_everyone() {
        let specs = default_candidates(Example::One);
        let solver = SolverOptions::default();
        for seed in 0..5 {
            let g = sample(seed);
            let run = run_jma(&g.dataset, &specs, &MatchOptions::default(), &solver, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let weights = method_weights(&run);
            let tecv = &weights[5].1;
            assert!(run.solution.objective <= cv_value(tecv, &run.system).unwrap() * (1.0 + 1e-12));
            let eval = evaluate(&run, &weights, &g.eval_points, &g.truth_eval, &solver).unwrap();
            for (_, a) in &eval.method_ase {
                assert!(*a >= eval.oracle.ase * (1.0 - 1e-6));
            }
        }
    }
}

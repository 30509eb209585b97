//! Monte Carlo studies over a grid of `(n, R², ρ, design)` cells.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use cate_jma::jma::{cv_value, SolverOptions};
use cate_jma::sim::{calibrate_c, Dgp, ErrorDesign, OracleFit};
use cate_jma::{CandidateSpec, WeightVector};

use crate::config::{Cell, Study};
use crate::error::{CliError, EstimationError};
use crate::pipeline::{evaluate, method_weights, run_jma, MatchOptions, Method};
use crate::seeds::{calibration_seed, replication_seed};

/// Failed replications are redrawn with the next sub-seed this many times.
pub const MAX_ATTEMPTS: usize = 5;

/// Criterion diagnostics of the averaging fit in one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JmaDiagnostics {
    pub pairs: usize,
    pub side_length: f64,
    pub skipped_cells: usize,
    pub cv_jma: f64,
    pub cv_tecv: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Everything recorded for one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub cell: Cell,
    pub rep: usize,
    pub attempt: usize,
    pub seed: u64,
    pub method_ase: Vec<(Method, f64)>,
    pub weights: Vec<(Method, WeightVector)>,
    pub candidate_ase: Vec<f64>,
    pub oracle: OracleFit,
    pub diagnostics: JmaDiagnostics,
    /// Total JMA weight on the correctly specified candidates.
    pub w_delta: Option<f64>,
}

impl Replication {
    pub fn new(cell: Cell, rep: usize, attempt: usize, seed: u64, s: Scored) -> Self {
        Self {
            cell,
            rep,
            attempt,
            seed,
            method_ase: s.method_ase,
            weights: s.weights,
            candidate_ase: s.candidate_ase,
            oracle: s.oracle,
            diagnostics: s.diagnostics,
            w_delta: s.w_delta,
        }
    }

    pub fn ase(&self, method: Method) -> f64 {
        self.method_ase
            .iter()
            .find(|(m, _)| *m == method)
            .map(|(_, a)| *a)
            .expect("every method is scored")
    }

    /// `ASE / oracle ASE`, or `None` when the oracle risk is zero.
    pub fn normalized(&self, method: Method) -> Option<f64> {
        (!self.oracle.normalizer_zero).then(|| self.ase(method) / self.oracle.ase)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub r2: f64,
    pub rho: f64,
    pub design: u8,
    pub c: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub calibrations: Vec<Calibration>,
    pub replications: Vec<Replication>,
}

/// Scores of one fitted dataset against known effects.
#[derive(Debug, Clone)]
pub struct Scored {
    pub method_ase: Vec<(Method, f64)>,
    pub weights: Vec<(Method, WeightVector)>,
    pub candidate_ase: Vec<f64>,
    pub oracle: OracleFit,
    pub diagnostics: JmaDiagnostics,
    pub w_delta: Option<f64>,
}

/// Runs every method on `data` and scores it at `eval_points`.
#[allow(clippy::too_many_arguments)]
pub fn score_replication(
    data: &cate_jma::Dataset,
    specs: &[CandidateSpec],
    eval_points: &nalgebra::DMatrix<f64>,
    truth: &[f64],
    n_correct: usize,
    match_opts: &MatchOptions,
    solver: &SolverOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Scored, EstimationError> {
    let run = run_jma(data, specs, match_opts, solver, rng)?;
    let weights = method_weights(&run);
    let eval = evaluate(&run, &weights, eval_points, truth, solver)?;
    let tecv = &weights
        .iter()
        .find(|(m, _)| *m == Method::Tecv)
        .expect("TECV is always scored")
        .1;
    let diagnostics = JmaDiagnostics {
        pairs: run.system.n_pairs(),
        side_length: run.system.pairs.side_length,
        skipped_cells: run.system.pairs.skipped_cells,
        cv_jma: run.solution.objective,
        cv_tecv: cv_value(tecv, &run.system)?,
        kkt_residual: run.solution.kkt_residual,
        converged: run.solution.converged,
        iterations: run.solution.iterations,
    };
    let w_delta = (n_correct > 0).then(|| run.solution.weights.as_slice()[..n_correct].iter().sum::<f64>().min(1.0));
    Ok(Scored {
        method_ase: eval.method_ase,
        weights,
        candidate_ase: eval.candidate_ase,
        oracle: eval.oracle,
        diagnostics,
        w_delta,
    })
}

fn replicate(
    study: &Study,
    specs: &[CandidateSpec],
    cell: Cell,
    c: f64,
    rep: usize,
) -> Result<Replication, CliError> {
    let design = ErrorDesign::try_from(cell.design).map_err(|e| CliError::Config(e.to_string()))?;
    let dgp = Dgp::new(cell.rho, design, c).map_err(|e| CliError::Config(e.to_string()))?;
    let match_opts = study.tuning.match_options();
    let solver = study.tuning.solver();
    let mut last_err = None;
    for attempt in 0..MAX_ATTEMPTS {
        let seed = replication_seed(study.seed, cell.n, cell.r2, cell.rho, cell.design, rep, attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = dgp.sample(cell.n, &mut rng).map_err(EstimationError::from).and_then(|(data, _)| {
            let points = dgp.covariates(study.n_eval, &mut rng);
            let truth = dgp.effect.eval_rows(&points);
            score_replication(&data, specs, &points, &truth, study.n_correct, &match_opts, &solver, &mut rng)
        });
        match outcome {
            Ok(scored) => return Ok(Replication::new(cell, rep, attempt, seed, scored)),
            Err(e) => last_err = Some(e),
        }
    }
    Err(CliError::estimation(
        format!(
            "n={} r2={} rho={} design={} rep={}: all {MAX_ATTEMPTS} attempts failed",
            cell.n, cell.r2, cell.rho, cell.design, rep
        ),
        last_err.expect("at least one attempt"),
    ))
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

/// Calibrates `c` once per distinct `(R², ρ, design)`.
pub fn calibrate(study: &Study, pool: &rayon::ThreadPool) -> Result<Vec<Calibration>, CliError> {
    let mut keys: Vec<(f64, f64, u8)> = Vec::new();
    for cell in study.cells() {
        if !keys.iter().any(|k| k.0.to_bits() == cell.r2.to_bits() && k.1 == cell.rho && k.2 == cell.design) {
            keys.push((cell.r2, cell.rho, cell.design));
        }
    }
    pool.install(|| {
        keys.par_iter()
            .map(|&(r2, rho, design)| {
                let seed = calibration_seed(study.seed, r2, rho, design);
                let c = match study.c {
                    Some(c) => c,
                    None => {
                        let d = ErrorDesign::try_from(design).map_err(|e| CliError::Config(e.to_string()))?;
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        calibrate_c(r2, rho, d, study.n_mc, study.calibration_tol, &mut rng)
                            .map_err(|e| CliError::estimation(format!("calibrating r2={r2} rho={rho} design={design}"), e))?
                    }
                };
                Ok(Calibration { r2, rho, design, c, seed })
            })
            .collect()
    })
}

pub fn run_study(study: &Study, threads: usize) -> Result<StudyResult, CliError> {
    let specs = study.specs()?;
    let pool = thread_pool(threads)?;
    let calibrations = calibrate(study, &pool)?;
    let tasks: Vec<(Cell, f64, usize)> = study
        .cells()
        .into_iter()
        .flat_map(|cell| {
            let c = calibrations
                .iter()
                .find(|k| k.r2.to_bits() == cell.r2.to_bits() && k.rho == cell.rho && k.design == cell.design)
                .expect("every cell is calibrated")
                .c;
            (0..study.reps).map(move |rep| (cell, c, rep))
        })
        .collect();
    let replications = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(cell, c, rep)| replicate(study, &specs, cell, c, rep))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(StudyResult {
        calibrations,
        replications,
    })
}

/// Mean risk of one method in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub cell: Cell,
    pub reps: usize,
    pub mean_ase: f64,
    pub mean_normalized_risk: f64,
    pub normalized_reps: usize,
    pub mean_w_delta: Option<f64>,
}

/// Groups replications by cell (first-seen order) and averages per method.
pub fn summarize(replications: &[Replication]) -> Vec<SummaryRow> {
    let mut groups: Vec<(Cell, Vec<&Replication>)> = Vec::new();
    for r in replications {
        match groups.iter_mut().find(|(c, _)| same_cell(c, &r.cell)) {
            Some((_, v)) => v.push(r),
            None => groups.push((r.cell, vec![r])),
        }
    }
    let mut out = Vec::new();
    for (cell, reps) in groups {
        for method in Method::ALL {
            let ase: Vec<f64> = reps.iter().map(|r| r.ase(method)).collect();
            let norm: Vec<f64> = reps.iter().filter_map(|r| r.normalized(method)).collect();
            let w: Vec<f64> = reps.iter().filter_map(|r| r.w_delta).collect();
            out.push(SummaryRow {
                method: method.name().to_string(),
                cell,
                reps: reps.len(),
                mean_ase: mean(&ase),
                mean_normalized_risk: mean(&norm),
                normalized_reps: norm.len(),
                mean_w_delta: (method == Method::Jma && !w.is_empty()).then(|| mean(&w)),
            });
        }
    }
    out
}

pub fn same_cell(a: &Cell, b: &Cell) -> bool {
    a.n == b.n && a.r2.to_bits() == b.r2.to_bits() && a.rho.to_bits() == b.rho.to_bits() && a.design == b.design
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

//! JMA on user data: per-observation effect estimates and weights.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use cate_jma::jma::jma_estimate;
use cate_jma::{CandidateSpec, CateEstimate, Dataset};

use crate::config::Estimate;
use crate::error::CliError;
use crate::io::fmt_f64;
use crate::pipeline::{match_dims, run_jma};

#[derive(Debug, Clone, Serialize)]
pub struct EstimateDiagnostics {
    pub n: usize,
    pub pairs: usize,
    pub side_length: f64,
    pub skipped_cells: usize,
    pub occupied_cells: usize,
    /// 1-based matching covariates.
    pub match_dims: Vec<usize>,
    pub cv: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub weights: Vec<f64>,
    pub candidates: Vec<String>,
}

pub fn run_estimate(cfg: &Estimate, data: &Dataset, specs: &[CandidateSpec]) -> Result<(CateEstimate, EstimateDiagnostics), CliError> {
    for s in specs {
        s.check_dims(data.p()).map_err(|e| CliError::Candidates(e.to_string()))?;
    }
    cfg.tuning.check_dims(data.p())?;
    let match_opts = cfg.tuning.match_options();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let run = run_jma(data, specs, &match_opts, &cfg.tuning.solver(), &mut rng)
        .map_err(|e| CliError::estimation("estimate", e))?;
    let est = jma_estimate(&run.fits, &run.solution.weights, data.covariates())
        .map_err(|e| CliError::estimation("estimate", e))?;
    let pairs = &run.system.pairs;
    let diag = EstimateDiagnostics {
        n: data.n(),
        pairs: pairs.len(),
        side_length: pairs.side_length,
        skipped_cells: pairs.skipped_cells,
        occupied_cells: pairs.occupied_cells,
        match_dims: match_dims(specs, &match_opts).iter().map(|d| d + 1).collect(),
        cv: run.solution.objective,
        kkt_residual: run.solution.kkt_residual,
        converged: run.solution.converged,
        iterations: run.solution.iterations,
        weights: run.solution.weights.as_slice().to_vec(),
        candidates: specs.iter().map(|s| s.to_string()).collect(),
    };
    Ok((est, diag))
}

/// `estimates.csv` (per observation) and `weights.csv` (per candidate).
pub fn write_estimate(dir: &Path, data: &Dataset, est: &CateEstimate, specs: &[CandidateSpec]) -> Result<(), CliError> {
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    let path = dir.join("estimates.csv");
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    let mut header = vec!["row".to_string(), "t".to_string(), "delta_hat".to_string()];
    header.extend((1..=specs.len()).map(|k| format!("m{k}")));
    w.write_record(&header).map_err(err)?;
    for i in 0..data.n() {
        let mut row = vec![
            (i + 1).to_string(),
            if data.treated()[i] { "1" } else { "0" }.to_string(),
            fmt_f64(est.values[i]),
        ];
        row.extend(est.per_model.row(i).iter().map(|v| fmt_f64(*v)));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = dir.join("weights.csv");
    let mut w = csv::Writer::from_path(&path).map_err(err)?;
    w.write_record(["candidate", "spec", "weight"]).map_err(err)?;
    for (k, (s, wk)) in specs.iter().zip(est.weights.as_slice()).enumerate() {
        w.write_record([(k + 1).to_string(), s.to_string(), fmt_f64(*wk)]).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

//! Result files. Rows arrive already in deterministic order; a single
//! writer emits each file.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::Cell;
use crate::error::CliError;
use crate::io::fmt_f64;
use crate::pipeline::Method;
use crate::study::{Replication, SummaryRow};

pub const RESULTS_HEADER: [&str; 8] = ["method", "n", "r2", "rho", "design", "rep", "ase", "normalizer"];

fn opt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        fmt_f64(v)
    }
}

fn cell_fields(c: &Cell) -> [String; 4] {
    [
        c.n.to_string(),
        opt_f64(c.r2),
        opt_f64(c.rho),
        if c.design == 0 { String::new() } else { c.design.to_string() },
    ]
}

struct Table {
    path: PathBuf,
    writer: csv::Writer<std::fs::File>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[String]) -> Result<Self, CliError> {
        let path = dir.join(name);
        let writer = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let mut t = Self { path, writer };
        t.row(header)?;
        Ok(t)
    }

    fn row<S: AsRef<[u8]>>(&mut self, fields: &[S]) -> Result<(), CliError> {
        self.writer
            .write_record(fields)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.path.display())))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// `results.csv`: one row per (replication, method).
pub fn write_results(dir: &Path, reps: &[Replication]) -> Result<(), CliError> {
    let mut t = Table::create(dir, "results.csv", &strings(&RESULTS_HEADER))?;
    for r in reps {
        let [n, r2, rho, design] = cell_fields(&r.cell);
        for (m, a) in &r.method_ase {
            t.row(&[
                m.name().to_string(),
                n.clone(),
                r2.clone(),
                rho.clone(),
                design.clone(),
                r.rep.to_string(),
                fmt_f64(*a),
                fmt_f64(r.oracle.ase),
            ])?;
        }
    }
    t.finish()
}

/// `weights.csv`: every method's weight vector per replication, plus the oracle's.
pub fn write_weights(dir: &Path, reps: &[Replication], k: usize) -> Result<(), CliError> {
    let mut header = strings(&["method", "n", "r2", "rho", "design", "rep"]);
    header.extend((1..=k).map(|j| format!("w{j}")));
    let mut t = Table::create(dir, "weights.csv", &header)?;
    for r in reps {
        let rows = r
            .weights
            .iter()
            .map(|(m, w)| (m.name(), w))
            .chain(std::iter::once(("ORACLE", &r.oracle.solution.weights)));
        for (name, w) in rows {
            let mut row = vec![name.to_string()];
            row.extend(cell_fields(&r.cell));
            row.push(r.rep.to_string());
            row.extend(w.as_slice().iter().map(|v| fmt_f64(*v)));
            t.row(&row)?;
        }
    }
    t.finish()
}

/// `candidates.csv`: ASE of each single candidate per replication.
pub fn write_candidate_ase(dir: &Path, reps: &[Replication]) -> Result<(), CliError> {
    let mut t = Table::create(dir, "candidates.csv", &strings(&["candidate", "n", "r2", "rho", "design", "rep", "ase"]))?;
    for r in reps {
        for (k, a) in r.candidate_ase.iter().enumerate() {
            let mut row = vec![format!("M{}", k + 1)];
            row.extend(cell_fields(&r.cell));
            row.push(r.rep.to_string());
            row.push(fmt_f64(*a));
            t.row(&row)?;
        }
    }
    t.finish()
}

/// `diagnostics.csv`: criterion values and solver state per replication.
pub fn write_diagnostics(dir: &Path, reps: &[Replication]) -> Result<(), CliError> {
    let header = strings(&[
        "n",
        "r2",
        "rho",
        "design",
        "rep",
        "attempt",
        "seed",
        "pairs",
        "side_length",
        "skipped_cells",
        "cv_jma",
        "cv_tecv",
        "cv_jma_le_tecv",
        "kkt_residual",
        "converged",
        "iterations",
        "w_delta",
        "normalizer_zero",
    ]);
    let mut t = Table::create(dir, "diagnostics.csv", &header)?;
    for r in reps {
        let d = &r.diagnostics;
        let mut row: Vec<String> = cell_fields(&r.cell).into();
        row.extend([
            r.rep.to_string(),
            r.attempt.to_string(),
            r.seed.to_string(),
            d.pairs.to_string(),
            fmt_f64(d.side_length),
            d.skipped_cells.to_string(),
            fmt_f64(d.cv_jma),
            fmt_f64(d.cv_tecv),
            (d.cv_jma <= d.cv_tecv).to_string(),
            fmt_f64(d.kkt_residual),
            d.converged.to_string(),
            d.iterations.to_string(),
            r.w_delta.map(fmt_f64).unwrap_or_default(),
            r.oracle.normalizer_zero.to_string(),
        ]);
        t.row(&row)?;
    }
    t.finish()
}

/// `summary.csv`: per-cell means.
pub fn write_summary(dir: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let header = strings(&[
        "method",
        "n",
        "r2",
        "rho",
        "design",
        "reps",
        "mean_ase",
        "mean_normalized_risk",
        "normalized_reps",
        "mean_w_delta",
    ]);
    let mut t = Table::create(dir, "summary.csv", &header)?;
    for s in rows {
        let mut row = vec![s.method.clone()];
        row.extend(cell_fields(&s.cell));
        row.extend([
            s.reps.to_string(),
            fmt_f64(s.mean_ase),
            opt_f64(s.mean_normalized_risk),
            s.normalized_reps.to_string(),
            s.mean_w_delta.map(fmt_f64).unwrap_or_default(),
        ]);
        t.row(&row)?;
    }
    t.finish()
}

pub fn write_all(dir: &Path, reps: &[Replication], summary: &[SummaryRow], k: usize) -> Result<(), CliError> {
    write_results(dir, reps)?;
    write_weights(dir, reps, k)?;
    write_candidate_ase(dir, reps)?;
    write_diagnostics(dir, reps)?;
    write_summary(dir, summary)
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Seeds actually used by one replication.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationSeed {
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<u8>,
    pub rep: usize,
    pub attempt: usize,
    pub seed: u64,
}

impl ReplicationSeed {
    pub fn of(r: &Replication) -> Self {
        let some = |v: f64| (!v.is_nan()).then_some(v);
        Self {
            n: r.cell.n,
            r2: some(r.cell.r2),
            rho: some(r.cell.rho),
            design: (r.cell.design != 0).then_some(r.cell.design),
            rep: r.rep,
            attempt: r.attempt,
            seed: r.seed,
        }
    }
}

/// Everything needed to rerun a command. `config` is itself a valid config file.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<C: Serialize, X: Serialize> {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    pub threads: usize,
    pub started_at: f64,
    pub finished_at: f64,
    pub config: C,
    pub details: X,
    pub replications: Vec<ReplicationSeed>,
}

pub fn unix_time() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn write_manifest<C: Serialize, X: Serialize>(dir: &Path, m: &RunManifest<C, X>) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(m).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
}

pub fn method_names() -> Vec<&'static str> {
    Method::ALL.iter().map(|m| m.name()).collect()
}

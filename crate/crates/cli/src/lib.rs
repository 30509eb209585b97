//! Simulation harness and command-line front end for `cate-jma`.
//!
//! Each subcommand has a `cmd_*` entry point here so that the binary stays a
//! thin argument parser and the commands can be driven from tests.

pub mod config;
pub mod error;
pub mod estimate;
pub mod guided;
pub mod io;
pub mod output;
pub mod pipeline;
pub mod seeds;
pub mod study;
pub mod synth;

use std::path::{Path, PathBuf};

use serde::Serialize;

use config::{load_config, Estimate, EstimateFile, Guided, GuidedFile, Study, StudyDefaults, StudyFile};
use error::CliError;
use output::{ensure_dir, unix_time, write_all, write_manifest, ReplicationSeed, RunManifest};
use study::{run_study, summarize, Calibration, StudyResult, SummaryRow};

pub use error::EstimationError;

/// Flags shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Global {
    pub seed: Option<u64>,
    /// 0 lets the thread pool decide.
    pub threads: usize,
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
}

impl Global {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed: None,
            threads: 0,
            out_dir: out_dir.into(),
            config: None,
        }
    }
}

/// Fills every `None` field of `$base` from `$top` taking precedence.
macro_rules! overlay {
    ($base:expr, $top:expr, [$($f:ident),* $(,)?]) => {{
        let mut b = $base;
        let t = $top;
        $( if t.$f.is_some() { b.$f = t.$f; } )*
        b
    }};
}

fn overlay_study(base: StudyFile, top: StudyFile) -> StudyFile {
    overlay!(
        base,
        top,
        [
            example,
            n,
            r2,
            rho,
            design,
            reps,
            n_eval,
            seed,
            c,
            n_mc,
            calibration_tol,
            candidates,
            n_correct,
            side_length,
            match_dims,
            min_pairs,
            solver_tol,
            max_iter
        ]
    )
}

fn overlay_guided(base: GuidedFile, top: GuidedFile) -> GuidedFile {
    overlay!(
        base,
        top,
        [
            data,
            candidates,
            true_model,
            reps,
            seed,
            sigma2,
            per_arm_variance,
            side_length,
            match_dims,
            min_pairs,
            solver_tol,
            max_iter
        ]
    )
}

fn overlay_estimate(base: EstimateFile, top: EstimateFile) -> EstimateFile {
    overlay!(
        base,
        top,
        [data, candidates, seed, side_length, match_dims, min_pairs, solver_tol, max_iter]
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Simulate,
    WeightsConsistency,
}

impl StudyKind {
    fn command(self) -> &'static str {
        match self {
            StudyKind::Simulate => "simulate",
            StudyKind::WeightsConsistency => "weights-consistency",
        }
    }

    fn defaults(self) -> StudyDefaults {
        match self {
            StudyKind::Simulate => StudyDefaults::simulate(),
            StudyKind::WeightsConsistency => StudyDefaults::weights_consistency(),
        }
    }
}

/// Config file, then subcommand flags, then `--seed`.
pub fn resolve_study(kind: StudyKind, global: &Global, flags: StudyFile) -> Result<Study, CliError> {
    let file: StudyFile = load_config(global.config.as_deref())?;
    let mut merged = overlay_study(file, flags);
    if global.seed.is_some() {
        merged.seed = global.seed;
    }
    let study = merged.resolve(&kind.defaults())?;
    if kind == StudyKind::WeightsConsistency && study.n_correct == 0 {
        return Err(CliError::Config(
            "weights-consistency needs correctly specified leading candidates (n_correct ≥ 1)".into(),
        ));
    }
    Ok(study)
}

#[derive(Debug, Clone, Serialize)]
struct StudyDetails<'a> {
    calibrations: &'a [Calibration],
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub study: Study,
    pub result: StudyResult,
    pub summary: Vec<SummaryRow>,
}

pub fn cmd_study(kind: StudyKind, global: &Global, flags: StudyFile) -> Result<StudyOutcome, CliError> {
    let study = resolve_study(kind, global, flags)?;
    let started_at = unix_time();
    let result = run_study(&study, global.threads)?;
    let summary = summarize(&result.replications);
    ensure_dir(&global.out_dir)?;
    write_all(&global.out_dir, &result.replications, &summary, study.candidates.len())?;
    if kind == StudyKind::WeightsConsistency {
        write_weight_curve(&global.out_dir, &summary)?;
    }
    write_manifest(
        &global.out_dir,
        &RunManifest {
            command: kind.command().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: study.seed,
            threads: global.threads,
            started_at,
            finished_at: unix_time(),
            config: &study,
            details: StudyDetails {
                calibrations: &result.calibrations,
            },
            replications: result.replications.iter().map(ReplicationSeed::of).collect(),
        },
    )?;
    Ok(StudyOutcome { study, result, summary })
}

/// `w_delta.csv`: mean JMA weight on the correct candidates per cell.
fn write_weight_curve(dir: &Path, summary: &[SummaryRow]) -> Result<(), CliError> {
    let path = dir.join("w_delta.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let err = |e: csv::Error| CliError::Runtime(e.to_string());
    w.write_record(["n", "r2", "rho", "design", "reps", "mean_w_delta"]).map_err(err)?;
    for s in summary.iter().filter(|s| s.mean_w_delta.is_some()) {
        w.write_record([
            s.cell.n.to_string(),
            io::fmt_f64(s.cell.r2),
            io::fmt_f64(s.cell.rho),
            s.cell.design.to_string(),
            s.reps.to_string(),
            io::fmt_f64(s.mean_w_delta.unwrap_or(f64::NAN)),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))
}

pub fn resolve_guided(global: &Global, flags: GuidedFile) -> Result<Guided, CliError> {
    let file: GuidedFile = load_config(global.config.as_deref())?;
    let mut merged = overlay_guided(file, flags);
    if global.seed.is_some() {
        merged.seed = global.seed;
    }
    merged.resolve()
}

#[derive(Debug, Clone)]
pub struct GuidedOutcome {
    pub config: Guided,
    pub result: guided::GuidedResult,
    pub summary: Vec<SummaryRow>,
}

pub fn cmd_guided(global: &Global, flags: GuidedFile) -> Result<GuidedOutcome, CliError> {
    let cfg = resolve_guided(global, flags)?;
    let data = io::read_dataset(&cfg.data)?;
    let specs = io::read_candidates(&cfg.candidates)?;
    let started_at = unix_time();
    let result = guided::run_guided(&cfg, &data, &specs, global.threads)?;
    let summary = summarize(&result.replications);
    ensure_dir(&global.out_dir)?;
    write_all(&global.out_dir, &result.replications, &summary, specs.len())?;
    write_manifest(
        &global.out_dir,
        &RunManifest {
            command: "guided".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: cfg.seed,
            threads: global.threads,
            started_at,
            finished_at: unix_time(),
            config: &cfg,
            details: &result.details,
            replications: result.replications.iter().map(ReplicationSeed::of).collect(),
        },
    )?;
    Ok(GuidedOutcome {
        config: cfg,
        result,
        summary,
    })
}

pub fn resolve_estimate(global: &Global, flags: EstimateFile) -> Result<Estimate, CliError> {
    let file: EstimateFile = load_config(global.config.as_deref())?;
    let mut merged = overlay_estimate(file, flags);
    if global.seed.is_some() {
        merged.seed = global.seed;
    }
    merged.resolve()
}

pub fn cmd_estimate(
    global: &Global,
    flags: EstimateFile,
) -> Result<(cate_jma::CateEstimate, estimate::EstimateDiagnostics), CliError> {
    let cfg = resolve_estimate(global, flags)?;
    let data = io::read_dataset(&cfg.data)?;
    let specs = io::read_candidates(&cfg.candidates)?;
    let started_at = unix_time();
    let (est, diag) = estimate::run_estimate(&cfg, &data, &specs)?;
    ensure_dir(&global.out_dir)?;
    estimate::write_estimate(&global.out_dir, &data, &est, &specs)?;
    write_manifest(
        &global.out_dir,
        &RunManifest {
            command: "estimate".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            master_seed: cfg.seed,
            threads: global.threads,
            started_at,
            finished_at: unix_time(),
            config: &cfg,
            details: &diag,
            replications: Vec::new(),
        },
    )?;
    Ok((est, diag))
}

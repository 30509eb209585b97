use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cate_jma::sim::{calibrate_c, default_candidates, ErrorDesign, Example};
use cate_jma_cli::config::{EstimateFile, GuidedFile, OneOrMany, StudyFile, DEFAULT_CALIBRATION_TOL, DEFAULT_N_MC};
use cate_jma_cli::error::CliError;
use cate_jma_cli::io::{write_dataset, CandidateDef};
use cate_jma_cli::output::ensure_dir;
use cate_jma_cli::study::SummaryRow;
use cate_jma_cli::{cmd_estimate, cmd_guided, cmd_study, synth, Global, StudyKind};

/// Jackknife model averaging for conditional average treatment effects.
#[derive(Parser)]
#[command(name = "cate-jma", version)]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// JSON or TOML config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo risk comparison over an (n, R², ρ, design) grid.
    Simulate(StudyArgs),
    /// Weight on the correct candidates as n grows.
    WeightsConsistency(StudyArgs),
    /// Guided simulation on a CSV dataset.
    Guided(GuidedArgs),
    /// Estimate effects on a CSV dataset.
    Estimate(EstimateArgs),
    /// Write a synthetic dataset (and its candidate file) to the output directory.
    MakeData(MakeDataArgs),
}

#[derive(Args, Default)]
struct TuningArgs {
    /// Cell side length in the unit cube (default (ln n / n)^(1/p)).
    #[arg(long)]
    side_length: Option<f64>,
    /// 1-based covariates used for matching (default: all used by candidates).
    #[arg(long, value_delimiter = ',')]
    match_dims: Option<Vec<usize>>,
    /// Minimum number of matched pairs (default: number of candidates).
    #[arg(long)]
    min_pairs: Option<usize>,
    #[arg(long)]
    solver_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct StudyArgs {
    /// Candidate set: 1 (all misspecified) or 2 (first correct).
    #[arg(long)]
    example: Option<u8>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    r2: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    design: Option<Vec<u8>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    n_eval: Option<usize>,
    /// Fixed signal scale instead of calibrating to R².
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    n_mc: Option<usize>,
    /// JSON candidate file replacing the built-in set.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    n_correct: Option<usize>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct GuidedArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// 1-based index of the candidate used as the true process.
    #[arg(long)]
    true_model: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Error variance override.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Estimate one residual variance per arm.
    #[arg(long)]
    per_arm_variance: bool,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    /// 722-person job-training stand-in (297 treated).
    JobTraining,
    /// One Monte Carlo sample.
    Example,
}

#[derive(Args)]
struct MakeDataArgs {
    #[arg(long, value_enum, default_value = "example")]
    kind: DataKind,
    /// Candidate set written next to the data (example kind).
    #[arg(long, default_value_t = 2)]
    example: u8,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    design: u8,
    /// Target R²; calibrates c.
    #[arg(long, default_value_t = 0.5)]
    r2: f64,
    /// Fixed c instead of calibrating.
    #[arg(long)]
    c: Option<f64>,
}

fn read_candidate_defs(path: Option<PathBuf>) -> Result<Option<Vec<CandidateDef>>, CliError> {
    match path {
        None => Ok(None),
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            cate_jma_cli::io::parse_candidates(&text).map(Some)
        }
    }
}

fn study_flags(a: StudyArgs) -> Result<StudyFile, CliError> {
    Ok(StudyFile {
        example: a.example,
        n: a.n.map(OneOrMany::Many),
        r2: a.r2.map(OneOrMany::Many),
        rho: a.rho.map(OneOrMany::Many),
        design: a.design.map(OneOrMany::Many),
        reps: a.reps,
        n_eval: a.n_eval,
        seed: None,
        c: a.c,
        n_mc: a.n_mc,
        calibration_tol: None,
        candidates: read_candidate_defs(a.candidates)?,
        n_correct: a.n_correct,
        side_length: a.tuning.side_length,
        match_dims: a.tuning.match_dims,
        min_pairs: a.tuning.min_pairs,
        solver_tol: a.tuning.solver_tol,
        max_iter: a.tuning.max_iter,
    })
}

fn print_summary(rows: &[SummaryRow]) {
    println!("{:<6} {:>5} {:>5} {:>5} {:>6} {:>12} {:>10} {:>8}", "method", "n", "r2", "rho", "design", "mean_ase", "norm_risk", "w_delta");
    for s in rows {
        println!(
            "{:<6} {:>5} {:>5} {:>5} {:>6} {:>12.6} {:>10.4} {:>8}",
            s.method,
            s.cell.n,
            if s.cell.r2.is_nan() { "-".to_string() } else { format!("{}", s.cell.r2) },
            if s.cell.rho.is_nan() { "-".to_string() } else { format!("{}", s.cell.rho) },
            if s.cell.design == 0 { "-".to_string() } else { s.cell.design.to_string() },
            s.mean_ase,
            s.mean_normalized_risk,
            s.mean_w_delta.map(|w| format!("{w:.4}")).unwrap_or_default()
        );
    }
}

fn make_data(global: &Global, a: MakeDataArgs) -> Result<(), CliError> {
    let seed = global.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ensure_dir(&global.out_dir)?;
    let data_path = global.out_dir.join("data.csv");
    match a.kind {
        DataKind::JobTraining => {
            let data = synth::job_training(&mut rng);
            write_dataset(&data_path, &data)?;
        }
        DataKind::Example => {
            let design = ErrorDesign::try_from(a.design).map_err(|e| CliError::Config(e.to_string()))?;
            let example = Example::try_from(a.example).map_err(|e| CliError::Config(e.to_string()))?;
            let c = match a.c {
                Some(c) => c,
                None => calibrate_c(a.r2, a.rho, design, DEFAULT_N_MC, DEFAULT_CALIBRATION_TOL, &mut rng)
                    .map_err(|e| CliError::Config(e.to_string()))?,
            };
            let data = synth::example_sample(a.n, a.rho, design, c, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
            write_dataset(&data_path, &data)?;
            let defs: Vec<CandidateDef> = default_candidates(example).iter().map(CandidateDef::from_spec).collect();
            let path = global.out_dir.join("candidates.json");
            let text = serde_json::to_string_pretty(&defs).map_err(|e| CliError::Runtime(e.to_string()))?;
            std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
            println!("c = {c}");
        }
    }
    println!("wrote {}", data_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let global = Global {
        seed: cli.seed,
        threads: cli.threads,
        out_dir: cli.out_dir,
        config: cli.config,
    };
    match cli.command {
        Command::Simulate(a) => {
            let out = cmd_study(StudyKind::Simulate, &global, study_flags(a)?)?;
            print_summary(&out.summary);
        }
        Command::WeightsConsistency(a) => {
            let out = cmd_study(StudyKind::WeightsConsistency, &global, study_flags(a)?)?;
            println!("{:>5} {:>12}", "n", "mean_w_delta");
            for s in out.summary.iter().filter(|s| s.mean_w_delta.is_some()) {
                println!("{:>5} {:>12.4}", s.cell.n, s.mean_w_delta.unwrap_or(f64::NAN));
            }
        }
        Command::Guided(a) => {
            let flags = GuidedFile {
                data: a.data,
                candidates: a.candidates,
                true_model: a.true_model,
                reps: a.reps,
                seed: None,
                sigma2: a.sigma2,
                per_arm_variance: a.per_arm_variance.then_some(true),
                side_length: a.tuning.side_length,
                match_dims: a.tuning.match_dims,
                min_pairs: a.tuning.min_pairs,
                solver_tol: a.tuning.solver_tol,
                max_iter: a.tuning.max_iter,
            };
            let out = cmd_guided(&global, flags)?;
            print_summary(&out.summary);
        }
        Command::Estimate(a) => {
            let flags = EstimateFile {
                data: a.data,
                candidates: a.candidates,
                seed: None,
                side_length: a.tuning.side_length,
                match_dims: a.tuning.match_dims,
                min_pairs: a.tuning.min_pairs,
                solver_tol: a.tuning.solver_tol,
                max_iter: a.tuning.max_iter,
            };
            let (_, diag) = cmd_estimate(&global, flags)?;
            println!("pairs = {}, h = {:.4}, skipped cells = {}, CV = {:.6}", diag.pairs, diag.side_length, diag.skipped_cells, diag.cv);
            for (k, (s, w)) in diag.candidates.iter().zip(&diag.weights).enumerate() {
                println!("w{} = {w:.6}  {s}", k + 1);
            }
        }
        Command::MakeData(a) => make_data(&global, a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

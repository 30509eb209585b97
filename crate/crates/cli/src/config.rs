//! Config files (JSON or TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cate_jma::jma::SolverOptions;
use cate_jma::sim::{default_candidates, correct_candidates, ErrorDesign, Example};
use cate_jma::CandidateSpec;

use crate::error::CliError;
use crate::io::{specs_from_defs, CandidateDef};
use crate::pipeline::MatchOptions;

/// A scalar or a list of grid values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Parses by extension; `.json` as JSON, anything else tries JSON then TOML.
pub fn parse_config<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match ext {
        "json" => serde_json::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        "toml" => toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        _ => match serde_json::from_str(text) {
            Ok(v) => Ok(v),
            Err(json_err) => toml::from_str(text).map_err(|toml_err| {
                CliError::Config(format!(
                    "{}: not valid JSON ({json_err}) or TOML ({toml_err})",
                    path.display()
                ))
            }),
        },
    }
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            parse_config(&text, p)
        }
    }
}

/// Matching and solver knobs shared by every command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningFile {
    pub side_length: Option<f64>,
    /// 1-based covariate indices.
    pub match_dims: Option<Vec<usize>>,
    pub min_pairs: Option<usize>,
    pub solver_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub side_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_pairs: Option<usize>,
    pub solver_tol: f64,
    pub max_iter: usize,
}

impl TuningFile {
    pub fn resolve(&self) -> Result<Tuning, CliError> {
        let defaults = SolverOptions::default();
        let t = Tuning {
            side_length: self.side_length,
            match_dims: self.match_dims.clone(),
            min_pairs: self.min_pairs,
            solver_tol: self.solver_tol.unwrap_or(defaults.tol),
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
        };
        if let Some(h) = t.side_length {
            if !(h > 0.0 && h <= 1.0) {
                return Err(CliError::Config(format!("side_length must lie in (0, 1], got {h}")));
            }
        }
        if let Some(d) = &t.match_dims {
            if d.is_empty() || d.contains(&0) {
                return Err(CliError::Config("match_dims must be a nonempty list of 1-based indices".into()));
            }
        }
        if t.min_pairs == Some(0) {
            return Err(CliError::Config("min_pairs must be at least 1".into()));
        }
        if !(t.solver_tol > 0.0) || t.max_iter == 0 {
            return Err(CliError::Config("solver_tol must be positive and max_iter at least 1".into()));
        }
        Ok(t)
    }
}

impl Tuning {
    pub fn match_options(&self) -> MatchOptions {
        MatchOptions {
            side_length: self.side_length,
            dims: self.match_dims.as_ref().map(|d| d.iter().map(|v| v - 1).collect()),
            min_pairs: self.min_pairs,
        }
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.max_iter,
        }
    }

    pub fn check_dims(&self, p: usize) -> Result<(), CliError> {
        if let Some(d) = &self.match_dims {
            if let Some(bad) = d.iter().find(|&&v| v > p) {
                return Err(CliError::Config(format!("match_dims entry {bad} exceeds the {p} covariates")));
            }
        }
        Ok(())
    }
}

/// `simulate` / `weights-consistency` config as read from disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub example: Option<u8>,
    pub n: Option<OneOrMany<usize>>,
    pub r2: Option<OneOrMany<f64>>,
    pub rho: Option<OneOrMany<f64>>,
    pub design: Option<OneOrMany<u8>>,
    pub reps: Option<usize>,
    pub n_eval: Option<usize>,
    pub seed: Option<u64>,
    /// Fixed signal scale; skips calibration.
    pub c: Option<f64>,
    pub n_mc: Option<usize>,
    pub calibration_tol: Option<f64>,
    pub candidates: Option<Vec<CandidateDef>>,
    /// How many leading candidates are correctly specified.
    pub n_correct: Option<usize>,
    pub side_length: Option<f64>,
    pub match_dims: Option<Vec<usize>>,
    pub min_pairs: Option<usize>,
    pub solver_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

/// A fully resolved study; serializes to a valid [`StudyFile`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study {
    pub example: u8,
    pub n: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<Vec<f64>>,
    pub rho: Vec<f64>,
    pub design: Vec<u8>,
    pub reps: usize,
    pub n_eval: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub n_mc: usize,
    pub calibration_tol: f64,
    pub candidates: Vec<CandidateDef>,
    pub n_correct: usize,
    #[serde(flatten)]
    pub tuning: Tuning,
}

/// Defaults that differ between `simulate` and `weights-consistency`.
#[derive(Debug, Clone)]
pub struct StudyDefaults {
    pub example: u8,
    pub n: Vec<usize>,
    pub r2: Vec<f64>,
    pub rho: Vec<f64>,
    pub design: Vec<u8>,
}

impl StudyDefaults {
    pub fn simulate() -> Self {
        Self {
            example: 1,
            n: vec![200, 400, 800],
            r2: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            rho: vec![0.0, 0.5],
            design: vec![1, 2],
        }
    }

    pub fn weights_consistency() -> Self {
        Self {
            example: 2,
            n: vec![200, 400, 800],
            r2: vec![0.5],
            rho: vec![0.0],
            design: vec![1],
        }
    }
}

pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_N_EVAL: usize = 10_000;
pub const DEFAULT_N_MC: usize = 1_000_000;
pub const DEFAULT_CALIBRATION_TOL: f64 = 5e-3;

impl StudyFile {
    pub fn resolve(&self, d: &StudyDefaults) -> Result<Study, CliError> {
        let example = self.example.unwrap_or(d.example);
        let ex = Example::try_from(example).map_err(|e| CliError::Config(e.to_string()))?;
        let candidates = match &self.candidates {
            Some(c) => c.clone(),
            None => default_candidates(ex).iter().map(CandidateDef::from_spec).collect(),
        };
        let n_correct = self.n_correct.unwrap_or(if self.candidates.is_some() && example == 1 {
            0
        } else {
            correct_candidates(ex).min(candidates.len())
        });
        let tuning = TuningFile {
            side_length: self.side_length,
            match_dims: self.match_dims.clone(),
            min_pairs: self.min_pairs,
            solver_tol: self.solver_tol,
            max_iter: self.max_iter,
        }
        .resolve()?;
        let study = Study {
            example,
            n: self.n.as_ref().map(OneOrMany::values).unwrap_or_else(|| d.n.clone()),
            r2: match (self.c, &self.r2) {
                (Some(_), None) => None,
                (_, Some(r)) => Some(r.values()),
                (None, None) => Some(d.r2.clone()),
            },
            rho: self.rho.as_ref().map(OneOrMany::values).unwrap_or_else(|| d.rho.clone()),
            design: self.design.as_ref().map(OneOrMany::values).unwrap_or_else(|| d.design.clone()),
            reps: self.reps.unwrap_or(DEFAULT_REPS),
            n_eval: self.n_eval.unwrap_or(DEFAULT_N_EVAL),
            seed: self.seed.unwrap_or(0),
            c: self.c,
            n_mc: self.n_mc.unwrap_or(DEFAULT_N_MC),
            calibration_tol: self.calibration_tol.unwrap_or(DEFAULT_CALIBRATION_TOL),
            candidates,
            n_correct,
            tuning,
        };
        study.validate()?;
        Ok(study)
    }
}

impl Study {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.n.is_empty() || self.rho.is_empty() || self.design.is_empty() {
            return bad("n, rho and design need at least one value".into());
        }
        if let Some(&n) = self.n.iter().find(|&&n| n < 20) {
            return bad(format!("n must be at least 20, got {n}"));
        }
        match (&self.r2, self.c) {
            (Some(_), Some(_)) => return bad("give either r2 (calibrated) or c (fixed), not both".into()),
            (Some(r), None) => {
                if r.is_empty() {
                    return bad("r2 needs at least one value".into());
                }
                if let Some(v) = r.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
                    return bad(format!("r2 must lie in (0, 1), got {v}"));
                }
            }
            (None, Some(c)) if !c.is_finite() => return bad(format!("c must be finite, got {c}")),
            _ => {}
        }
        if let Some(v) = self.rho.iter().find(|v| !(**v > -1.0 && **v < 1.0)) {
            return bad(format!("rho must lie in (-1, 1), got {v}"));
        }
        for &d in &self.design {
            ErrorDesign::try_from(d).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.reps == 0 || self.n_eval == 0 {
            return bad("reps and n_eval must be at least 1".into());
        }
        if self.n_mc < 2 || !(self.calibration_tol > 0.0) {
            return bad("n_mc must be at least 2 and calibration_tol positive".into());
        }
        let specs = self.specs()?;
        if self.n_correct > specs.len() {
            return bad(format!("n_correct = {} exceeds the {} candidates", self.n_correct, specs.len()));
        }
        for s in &specs {
            s.check_dims(cate_jma::sim::N_COVARIATES)
                .map_err(|e| CliError::Candidates(e.to_string()))?;
        }
        self.tuning.check_dims(cate_jma::sim::N_COVARIATES)
    }

    pub fn specs(&self) -> Result<Vec<CandidateSpec>, CliError> {
        specs_from_defs(&self.candidates)
    }

    /// Grid cells `(n, r2 or NaN, rho, design)` in nested config order.
    pub fn cells(&self) -> Vec<Cell> {
        let r2s = self.r2.clone().unwrap_or_else(|| vec![f64::NAN]);
        let mut out = Vec::new();
        for &n in &self.n {
            for &r2 in &r2s {
                for &rho in &self.rho {
                    for &design in &self.design {
                        out.push(Cell { n, r2, rho, design });
                    }
                }
            }
        }
        out
    }
}

/// One point of the simulation grid. `r2` is NaN when `c` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    pub n: usize,
    pub r2: f64,
    pub rho: f64,
    pub design: u8,
}

/// `guided` config as read from disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidedFile {
    pub data: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    /// 1-based index of the candidate treated as the truth.
    pub true_model: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    /// Replaces the estimated error variance.
    pub sigma2: Option<f64>,
    /// Separate residual variances per arm instead of one pooled value.
    pub per_arm_variance: Option<bool>,
    pub side_length: Option<f64>,
    pub match_dims: Option<Vec<usize>>,
    pub min_pairs: Option<usize>,
    pub solver_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Guided {
    pub data: PathBuf,
    pub candidates: PathBuf,
    pub true_model: usize,
    pub reps: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    pub per_arm_variance: bool,
    #[serde(flatten)]
    pub tuning: Tuning,
}

impl GuidedFile {
    pub fn resolve(&self) -> Result<Guided, CliError> {
        let missing = |k: &str| CliError::Config(format!("guided needs `{k}` (config key or flag)"));
        let g = Guided {
            data: self.data.clone().ok_or_else(|| missing("data"))?,
            candidates: self.candidates.clone().ok_or_else(|| missing("candidates"))?,
            true_model: self.true_model.ok_or_else(|| missing("true_model"))?,
            reps: self.reps.unwrap_or(DEFAULT_REPS),
            seed: self.seed.unwrap_or(0),
            sigma2: self.sigma2,
            per_arm_variance: self.per_arm_variance.unwrap_or(false),
            tuning: TuningFile {
                side_length: self.side_length,
                match_dims: self.match_dims.clone(),
                min_pairs: self.min_pairs,
                solver_tol: self.solver_tol,
                max_iter: self.max_iter,
            }
            .resolve()?,
        };
        if g.true_model == 0 {
            return Err(CliError::Config("true_model is 1-based".into()));
        }
        if g.reps == 0 {
            return Err(CliError::Config("reps must be at least 1".into()));
        }
        if let Some(s) = g.sigma2 {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(CliError::Config(format!("sigma2 must be finite and nonnegative, got {s}")));
            }
            if g.per_arm_variance {
                return Err(CliError::Config("sigma2 and per_arm_variance are mutually exclusive".into()));
            }
        }
        Ok(g)
    }
}

/// `estimate` config as read from disk.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    pub data: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub seed: Option<u64>,
    pub side_length: Option<f64>,
    pub match_dims: Option<Vec<usize>>,
    pub min_pairs: Option<usize>,
    pub solver_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub data: PathBuf,
    pub candidates: PathBuf,
    pub seed: u64,
    #[serde(flatten)]
    pub tuning: Tuning,
}

impl EstimateFile {
    pub fn resolve(&self) -> Result<Estimate, CliError> {
        let missing = |k: &str| CliError::Config(format!("estimate needs `{k}` (config key or flag)"));
        Ok(Estimate {
            data: self.data.clone().ok_or_else(|| missing("data"))?,
            candidates: self.candidates.clone().ok_or_else(|| missing("candidates"))?,
            seed: self.seed.unwrap_or(0),
            tuning: TuningFile {
                side_length: self.side_length,
                match_dims: self.match_dims.clone(),
                min_pairs: self.min_pairs,
                solver_tol: self.solver_tol,
                max_iter: self.max_iter,
            }
            .resolve()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn json(text: &str) -> Result<StudyFile, CliError> {
        parse_config(text, Path::new("x.json"))
    }

    #[test]
    fn scalars_and_lists() {
        let f = json(r#"{"n": 200, "r2": [0.5, 0.9], "reps": 3}"#).unwrap();
        let s = f.resolve(&StudyDefaults::simulate()).unwrap();
        assert_eq!(s.n, vec![200]);
        assert_eq!(s.r2, Some(vec![0.5, 0.9]));
        assert_eq!(s.rho, vec![0.0, 0.5]);
        assert_eq!(s.cells().len(), 2 * 2 * 2);
        assert_eq!(s.candidates.len(), 4);
        assert_eq!(s.n_correct, 0);
    }

    #[test]
    fn toml_form() {
        let f: StudyFile = parse_config(
            "n = [200, 400]\nr2 = 0.7\nrho = 0.0\ndesign = 1\nreps = 5\n",
            Path::new("c.toml"),
        )
        .unwrap();
        let s = f.resolve(&StudyDefaults::simulate()).unwrap();
        assert_eq!(s.cells().len(), 2);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = json(r#"{"n": 200, "sample_size": 3}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("sample_size"), "{err}");
        let err = parse_config::<StudyFile>("bogus = 1\n", Path::new("c.toml")).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn validation() {
        let d = StudyDefaults::simulate();
        assert!(json(r#"{"r2": 1.0}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"n": 10}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"design": 3}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"rho": 1.0}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"c": 0.0, "r2": 0.5}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"side_length": 0}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"match_dims": [5]}"#).unwrap().resolve(&d).is_err());
        assert!(json(r#"{"candidates": [[{"var": 7}]]}"#).unwrap().resolve(&d).is_err());
        let s = json(r#"{"c": 0.0}"#).unwrap().resolve(&d).unwrap();
        assert!(s.cells()[0].r2.is_nan());
    }

    #[test]
    fn resolved_study_round_trips() {
        let s = json(r#"{"n": 200, "r2": 0.9, "rho": 0, "design": 1, "reps": 2, "seed": 4}"#)
            .unwrap()
            .resolve(&StudyDefaults::simulate())
            .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back = json(&text).unwrap().resolve(&StudyDefaults::weights_consistency()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn weights_consistency_defaults() {
        let s = StudyFile::default().resolve(&StudyDefaults::weights_consistency()).unwrap();
        assert_eq!(s.example, 2);
        assert_eq!(s.n_correct, 1);
        assert_eq!(s.cells().len(), 3);
    }

    #[test]
    fn guided_requires_paths() {
        assert!(GuidedFile::default().resolve().is_err());
        let g = GuidedFile {
            data: Some("d.csv".into()),
            candidates: Some("c.json".into()),
            true_model: Some(1),
            ..Default::default()
        };
        assert!(g.resolve().is_ok());
        assert!(GuidedFile { true_model: Some(0), ..g.clone() }.resolve().is_err());
        assert!(GuidedFile { sigma2: Some(-1.0), ..g }.resolve().is_err());
    }
}

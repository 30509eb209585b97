//! Input files: response/treatment/covariate CSVs and candidate spec JSON.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use cate_jma::{CandidateSpec, Dataset, Term};

use crate::error::CliError;

/// One basis term, with 1-based covariate indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermDef {
    Power(PowerTerm),
    Interaction(InteractionTerm),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTerm {
    pub var: usize,
    #[serde(default = "one")]
    pub pow: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionTerm {
    pub inter: [usize; 2],
}

fn one() -> u8 {
    1
}

fn yes() -> bool {
    true
}

/// A candidate: either a bare term list (with intercept) or an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CandidateDef {
    Terms(Vec<TermDef>),
    Full(CandidateObject),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateObject {
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub terms: Vec<TermDef>,
}

impl TermDef {
    fn to_term(&self) -> Result<Term, String> {
        let zero_based = |v: usize| {
            v.checked_sub(1)
                .ok_or_else(|| "covariate indices are 1-based (u1 is 1)".to_string())
        };
        match self {
            TermDef::Power(PowerTerm { var, pow: 1 }) => Ok(Term::Linear(zero_based(*var)?)),
            TermDef::Power(PowerTerm { var, pow: 2 }) => Ok(Term::Square(zero_based(*var)?)),
            TermDef::Power(PowerTerm { pow, .. }) => Err(format!("pow must be 1 or 2, got {pow}")),
            TermDef::Interaction(InteractionTerm { inter: [i, j] }) => {
                Ok(Term::Interaction(zero_based(*i)?, zero_based(*j)?))
            }
        }
    }

    pub fn from_term(term: &Term) -> Self {
        match *term {
            Term::Linear(v) => TermDef::Power(PowerTerm { var: v + 1, pow: 1 }),
            Term::Square(v) => TermDef::Power(PowerTerm { var: v + 1, pow: 2 }),
            Term::Interaction(i, j) => TermDef::Interaction(InteractionTerm { inter: [i + 1, j + 1] }),
        }
    }
}

impl CandidateDef {
    pub fn to_spec(&self, id: usize) -> Result<CandidateSpec, CliError> {
        let (intercept, terms) = match self {
            CandidateDef::Terms(t) => (true, t),
            CandidateDef::Full(o) => (o.intercept, &o.terms),
        };
        let terms = terms
            .iter()
            .map(TermDef::to_term)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Candidates(format!("candidate {}: {e}", id + 1)))?;
        CandidateSpec::new(id, intercept, terms).map_err(|e| CliError::Candidates(e.to_string()))
    }

    pub fn from_spec(spec: &CandidateSpec) -> Self {
        CandidateDef::Full(CandidateObject {
            intercept: spec.has_intercept(),
            terms: spec.terms().iter().map(TermDef::from_term).collect(),
        })
    }
}

pub fn specs_from_defs(defs: &[CandidateDef]) -> Result<Vec<CandidateSpec>, CliError> {
    if defs.is_empty() {
        return Err(CliError::Candidates("need at least one candidate".into()));
    }
    defs.iter().enumerate().map(|(k, d)| d.to_spec(k)).collect()
}

pub fn parse_candidates(text: &str) -> Result<Vec<CandidateDef>, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Candidates(e.to_string()))
}

pub fn read_candidates(path: &Path) -> Result<Vec<CandidateSpec>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    specs_from_defs(&parse_candidates(&text)?)
}

/// Parses a CSV with header columns `y`, `t` (0/1) and `u1..up`.
/// Other columns are ignored.
pub fn parse_dataset<R: std::io::Read>(reader: R) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::CsvInvalid(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let y_col = find("y").ok_or_else(|| CliError::CsvInvalid("missing required column `y`".into()))?;
    let t_col = find("t").ok_or_else(|| CliError::CsvInvalid("missing required column `t`".into()))?;
    let mut u_cols = Vec::new();
    while let Some(c) = find(&format!("u{}", u_cols.len() + 1)) {
        u_cols.push(c);
    }
    if u_cols.is_empty() {
        return Err(CliError::CsvInvalid("missing covariate column `u1`".into()));
    }
    let declared = headers
        .iter()
        .filter(|h| h.len() > 1 && h.starts_with('u') && h[1..].parse::<usize>().is_ok())
        .count();
    if declared != u_cols.len() {
        return Err(CliError::CsvInvalid(format!(
            "covariate columns must be u1..up without gaps; found u1..u{} plus {} more",
            u_cols.len(),
            declared - u_cols.len()
        )));
    }

    let p = u_cols.len();
    let mut values = Vec::new();
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let row = line + 1;
        let record = record.map_err(|e| CliError::CsvInvalid(e.to_string()))?;
        let field = |col: usize, name: &str| -> Result<f64, CliError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| CliError::CsvInvalid(format!("row {row}, column `{name}`: not a number: {raw:?}")))
        };
        y.push(field(y_col, "y")?);
        let tv = field(t_col, "t")?;
        t.push(match tv {
            v if v == 1.0 => true,
            v if v == 0.0 => false,
            _ => return Err(CliError::CsvInvalid(format!("row {row}, column `t`: expected 0 or 1, got {tv}"))),
        });
        for (j, &c) in u_cols.iter().enumerate() {
            values.push(field(c, &format!("u{}", j + 1))?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, p, &values);
    Dataset::new(x, t, y).map_err(|e| CliError::CsvInvalid(e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(file)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut header = vec!["y".to_string(), "t".to_string()];
    header.extend((1..=data.p()).map(|j| format!("u{j}")));
    w.write_record(&header).map_err(|e| CliError::Runtime(e.to_string()))?;
    for i in 0..data.n() {
        let mut rec = vec![fmt_f64(data.response()[i]), if data.treated()[i] { "1" } else { "0" }.to_string()];
        rec.extend(data.row(i).into_iter().map(fmt_f64));
        w.write_record(&rec).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Shortest representation that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

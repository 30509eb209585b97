use std::collections::{BTreeSet, HashSet};
use std::fmt;

use nalgebra::DMatrix;

use super::JmaError;
use crate::ols::{DesignMatrix, OlsError};

/// One basis column built from the raw covariates (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Linear(usize),
    Square(usize),
    /// Product of two distinct covariates.
    Interaction(usize, usize),
}

impl Term {
    fn normalized(self) -> Self {
        match self {
            Term::Interaction(a, b) if a > b => Term::Interaction(b, a),
            t => t,
        }
    }

    fn max_index(self) -> usize {
        match self {
            Term::Linear(i) | Term::Square(i) => i,
            Term::Interaction(a, b) => a.max(b),
        }
    }

    #[inline]
    fn eval(self, u: &[f64]) -> f64 {
        match self {
            Term::Linear(i) => u[i],
            Term::Square(i) => u[i] * u[i],
            Term::Interaction(a, b) => u[a] * u[b],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Linear(i) => write!(f, "u{}", i + 1),
            Term::Square(i) => write!(f, "u{}^2", i + 1),
            Term::Interaction(a, b) => write!(f, "u{}*u{}", a + 1, b + 1),
        }
    }
}

/// A linear candidate model: the basis shared by both arms' regressions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSpec {
    pub id: usize,
    intercept: bool,
    terms: Vec<Term>,
}

impl CandidateSpec {
    pub fn new(id: usize, intercept: bool, terms: Vec<Term>) -> Result<Self, JmaError> {
        if !intercept && terms.is_empty() {
            return Err(JmaError::InvalidCandidate {
                id,
                reason: "no basis columns".into(),
            });
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(terms.len());
        for term in terms {
            if let Term::Interaction(a, b) = term {
                if a == b {
                    return Err(JmaError::InvalidCandidate {
                        id,
                        reason: format!("interaction of u{} with itself; use a square term", a + 1),
                    });
                }
            }
            let term = term.normalized();
            if !seen.insert(term) {
                return Err(JmaError::InvalidCandidate {
                    id,
                    reason: format!("duplicate term {term}"),
                });
            }
            normalized.push(term);
        }
        Ok(Self {
            id,
            intercept,
            terms: normalized,
        })
    }

    /// Intercept plus linear terms in the given covariates.
    pub fn linear(id: usize, vars: &[usize]) -> Self {
        Self::new(id, true, vars.iter().map(|&v| Term::Linear(v)).collect())
            .expect("distinct linear terms")
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Number of basis columns `p_k`.
    pub fn n_columns(&self) -> usize {
        self.terms.len() + usize::from(self.intercept)
    }

    /// Raw covariates referenced by any term.
    pub fn raw_covariates(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for t in &self.terms {
            match *t {
                Term::Linear(i) | Term::Square(i) => {
                    out.insert(i);
                }
                Term::Interaction(a, b) => {
                    out.insert(a);
                    out.insert(b);
                }
            }
        }
        out
    }

    pub fn check_dims(&self, p: usize) -> Result<(), JmaError> {
        match self.terms.iter().map(|t| t.max_index()).max() {
            Some(max) if max >= p => Err(JmaError::IndexOutOfRange {
                candidate: self.id,
                index: max,
                p,
            }),
            _ => Ok(()),
        }
    }

    /// Basis vector `u^k` for a raw covariate vector.
    pub fn expand(&self, u_raw: &[f64]) -> Result<Vec<f64>, JmaError> {
        self.check_dims(u_raw.len())?;
        let mut out = Vec::with_capacity(self.n_columns());
        self.expand_into(u_raw, &mut out);
        Ok(out)
    }

    /// Appends the basis of `u_raw` to `out`. Indices must already be checked.
    pub(crate) fn expand_into(&self, u_raw: &[f64], out: &mut Vec<f64>) {
        if self.intercept {
            out.push(1.0);
        }
        out.extend(self.terms.iter().map(|t| t.eval(u_raw)));
    }

    /// Design matrix over the given rows of `x`; `arm` labels errors.
    pub fn design(
        &self,
        x: &DMatrix<f64>,
        rows: &[usize],
        arm: &'static str,
    ) -> Result<DesignMatrix, JmaError> {
        self.check_dims(x.ncols())?;
        let p = self.n_columns();
        let mut data = Vec::with_capacity(rows.len() * p);
        let mut raw = vec![0.0; x.ncols()];
        for &i in rows {
            for (j, v) in raw.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            self.expand_into(&raw, &mut data);
        }
        DesignMatrix::new(DMatrix::from_row_slice(rows.len(), p, &data)).map_err(|source: OlsError| {
            JmaError::Fit {
                candidate: self.id,
                arm,
                source,
            }
        })
    }
}

impl fmt::Display for CandidateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if self.intercept {
            parts.push("1".into());
        }
        parts.extend(self.terms.iter().map(Term::to_string));
        write!(f, "{{{}}}", parts.join(", "))
    }
}

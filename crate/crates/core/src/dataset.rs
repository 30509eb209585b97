//! Observational data: covariates, binary treatment and response.

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("length mismatch: {covariate_rows} covariate rows, {treatment} treatment flags, {response} responses")]
    LengthMismatch {
        covariate_rows: usize,
        treatment: usize,
        response: usize,
    },
    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("dataset has no {0} observations")]
    EmptyArm(&'static str),
}

/// `n` observations of `p` covariates, a treatment flag and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: DMatrix<f64>,
    treated: Vec<bool>,
    response: Vec<f64>,
}

impl Dataset {
    pub fn new(
        covariates: DMatrix<f64>,
        treated: Vec<bool>,
        response: Vec<f64>,
    ) -> Result<Self, DatasetError> {
        let n = covariates.nrows();
        if treated.len() != n || response.len() != n {
            return Err(DatasetError::LengthMismatch {
                covariate_rows: n,
                treatment: treated.len(),
                response: response.len(),
            });
        }
        for i in 0..n {
            if covariates.row(i).iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    what: "covariates",
                    row: i,
                });
            }
            if !response[i].is_finite() {
                return Err(DatasetError::NonFinite {
                    what: "response",
                    row: i,
                });
            }
        }
        if !treated.iter().any(|&t| t) {
            return Err(DatasetError::EmptyArm("treated"));
        }
        if treated.iter().all(|&t| t) {
            return Err(DatasetError::EmptyArm("control"));
        }
        Ok(Self {
            covariates,
            treated,
            response,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Covariate row `i` as an owned vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.covariates.row(i).iter().copied().collect()
    }

    /// Replaces the response, keeping covariates and treatment.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self, DatasetError> {
        Self::new(self.covariates.clone(), self.treated.clone(), response)
    }

    pub fn arms(&self) -> ArmSplit {
        ArmSplit::new(&self.treated)
    }
}

/// Global row indices of each arm, plus each row's position inside its own arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmSplit {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    local: Vec<usize>,
}

impl ArmSplit {
    pub fn new(treated_flags: &[bool]) -> Self {
        let mut treated = Vec::new();
        let mut control = Vec::new();
        let mut local = Vec::with_capacity(treated_flags.len());
        for (i, &t) in treated_flags.iter().enumerate() {
            if t {
                local.push(treated.len());
                treated.push(i);
            } else {
                local.push(control.len());
                control.push(i);
            }
        }
        Self {
            treated,
            control,
            local,
        }
    }

    /// Row position of global observation `i` within its arm.
    pub fn local_index(&self, i: usize) -> usize {
        self.local[i]
    }
}

use thiserror::Error;

use cate_jma::{DatasetError, JmaError, MatchError};
use cate_jma::sim::SimError;

/// Everything a subcommand can fail with, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid CSV: {0}")]
    CsvInvalid(String),
    #[error("invalid candidates: {0}")]
    Candidates(String),
    #[error("{context}: {source}")]
    Estimation {
        context: String,
        #[source]
        source: EstimationError,
    },
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::CsvInvalid(_) | CliError::Candidates(_) => 2,
            CliError::Estimation { .. } | CliError::Runtime(_) | CliError::Io { .. } => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn estimation(context: impl Into<String>, source: impl Into<EstimationError>) -> Self {
        CliError::Estimation {
            context: context.into(),
            source: source.into(),
        }
    }
}

/// Library failures inside one estimation run.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Jma(#[from] JmaError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

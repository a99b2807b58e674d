use std::path::PathBuf;

use crate::model::ValidationErrors;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid state grids: {0}")]
    InvalidGrids(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(#[from] ValidationErrors),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid observations: {0}")]
    InvalidObservations(String),

    #[error("forward recursion underflowed at step {step}; sigma is too small for the data scale")]
    NumericalUnderflow { step: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("earnings history: {0}")]
    Earnings(String),

    #[error("empty partition: {0}")]
    EmptyPartition(&'static str),
}

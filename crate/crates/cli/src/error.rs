use std::path::Path;

/// Failure of a subcommand, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or configuration (exit code 1).
    #[error("{0}")]
    Usage(String),
    /// Missing or malformed input data, or unwritable output (exit code 2).
    #[error("{0}")]
    Data(String),
    /// EM stopped at `max_iters` for the listed symbols (exit code 3). Their
    /// model files are still written and flagged.
    #[error("EM did not converge for: {}", .0.join(", "))]
    NotConverged(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::NotConverged(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<pe_dbn::Error> for CliError {
    fn from(e: pe_dbn::Error) -> Self {
        use pe_dbn::Error as E;
        match e {
            E::InvalidGrids(_) | E::InvalidParams(_) | E::InvalidPrior(_) | E::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            E::InvalidObservations(_)
            | E::NumericalUnderflow { .. }
            | E::Parse { .. }
            | E::Io { .. }
            | E::Earnings(_)
            | E::EmptyPartition(_) => CliError::Data(e.to_string()),
        }
    }
}

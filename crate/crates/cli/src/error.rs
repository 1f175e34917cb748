use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes. Usage errors exit with 2 from the argument parser.
pub mod exit {
    pub const CONFIG: u8 = 3;
    pub const CONVERGENCE: u8 = 4;
    pub const STATISTICS: u8 = 5;
    pub const IO: u8 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hbt_core::Error),

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use hbt_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Write { .. } => exit::IO,
            CliError::Core(e) => match e {
                E::Convergence(_) => exit::CONVERGENCE,
                E::InsufficientStatistics(_) => exit::STATISTICS,
                E::Io(_) => exit::IO,
                E::Domain(_)
                | E::Infeasible(_)
                | E::OutOfRange { .. }
                | E::UndefinedCorrelation
                | E::Config(_)
                | E::Parse(_) => exit::CONFIG,
            },
        }
    }
}

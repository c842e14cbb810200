use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("fit is undefined for an all-zero truth")]
    ZeroTruth,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl BenchError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<gks_core::SolverError> for BenchError {
    fn from(e: gks_core::SolverError) -> Self {
        BenchError::Solver(e.to_string())
    }
}

impl From<gks_core::IpError> for BenchError {
    fn from(e: gks_core::IpError) -> Self {
        BenchError::Solver(e.to_string())
    }
}

impl From<gks_core::statespace::ModelError> for BenchError {
    fn from(e: gks_core::statespace::ModelError) -> Self {
        BenchError::Config(e.to_string())
    }
}

use thiserror::Error;

/// Failures of a run, each with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Strict(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Selfcheck(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Domain(_) => 2,
            CliError::Strict(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Selfcheck(_) => 5,
        }
    }
}

impl From<iltlab_core::Error> for CliError {
    fn from(e: iltlab_core::Error) -> Self {
        use iltlab_core::Error as E;
        match e {
            E::Contract(m) => CliError::Config(m),
            E::Infeasible(m) => CliError::Infeasible(format!("infeasible program: {m}")),
            other => CliError::Domain(other.to_string()),
        }
    }
}

use collusion_core::Error as CoreError;
use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_NOT_CONVERGED: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    NotConverged(String),

    #[error("{message}")]
    Reported { message: String, code: u8 },

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Reported { code, .. } => *code,
            CliError::Core(e) => match e {
                CoreError::SolverFailure { .. }
                | CoreError::CornerEquilibrium { .. }
                | CoreError::InfeasibleProfit { .. }
                | CoreError::ZeroDisagreement(_) => EXIT_SOLVER,
                CoreError::InvalidParams(_)
                | CoreError::InvalidConfig(_)
                | CoreError::InvalidExperiment(_)
                | CoreError::InfeasibleNu { .. } => EXIT_USAGE,
                _ => EXIT_INPUT,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

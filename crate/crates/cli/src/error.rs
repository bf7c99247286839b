use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failure categories; each maps to a fixed exit code.
#[derive(Debug, Clone, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("problem: {0}")]
    Problem(String),

    #[error("cap: {0}")]
    Cap(String),

    #[error("oracle-mismatch: {0}")]
    Mismatch(String),

    #[error("io: {0}")]
    Io(String),

    #[error("solver: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Problem(_) => 3,
            CliError::Cap(_) => 4,
            CliError::Mismatch(_) => 5,
            CliError::Io(_) => 6,
            CliError::Solver(_) => 1,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Problem(_) => "problem",
            CliError::Cap(_) => "cap",
            CliError::Mismatch(_) => "oracle-mismatch",
            CliError::Io(_) => "io",
            CliError::Solver(_) => "solver",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Problem(m)
            | CliError::Cap(m)
            | CliError::Mismatch(m)
            | CliError::Io(m)
            | CliError::Solver(m) => m,
        }
    }

    pub(crate) fn io(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<riskplan::Error> for CliError {
    fn from(e: riskplan::Error) -> Self {
        use riskplan::Error as E;
        let msg = e.to_string();
        match e {
            E::UnknownDomain(_) | E::BadParameter { .. } | E::InvalidArgument(_) => CliError::Config(msg),
            E::InvalidModel(_) | E::Parse(_) => CliError::Problem(msg),
            E::CapExceeded { .. } => CliError::Cap(msg),
            E::InfeasibleBudget { .. } => CliError::Solver(msg),
        }
    }
}

use thiserror::Error;

/// Command failure, classified by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data format error: {0}")]
    Format(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Format(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

impl From<sdanet::Error> for CliError {
    fn from(err: sdanet::Error) -> Self {
        use sdanet::Error as E;
        match err {
            E::Argument(_) | E::Shape { .. } => CliError::Config(err.to_string()),
            E::Format(_) => CliError::Format(err.to_string()),
            E::NonFinite { .. } => CliError::Numeric(err.to_string()),
            E::Contract(_) | E::BudgetExceeded { .. } | E::IncompleteGrid(_) => CliError::Internal(err.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

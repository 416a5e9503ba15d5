use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) | CliError::Invalid(_) => 2,
            CliError::NonConvergence(_) => 3,
        }
    }
}

impl From<cvrelay::Error> for CliError {
    fn from(e: cvrelay::Error) -> Self {
        match e {
            cvrelay::Error::InvalidParameter(msg) => CliError::Invalid(msg),
            cvrelay::Error::NumericFailure(msg) => CliError::NonConvergence(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

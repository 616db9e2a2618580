use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    /// One or more validation checks failed; the report has the details.
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("estimator failure: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<pathctl_core::Error> for CliError {
    fn from(e: pathctl_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

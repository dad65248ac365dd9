use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, missing files, malformed config.
    #[error("{0}")]
    Validation(String),

    /// The work itself failed.
    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] otrank::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

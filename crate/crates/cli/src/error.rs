use polyprotect::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;
pub const EXIT_EXHAUSTED: u8 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("key selection exhausted for {count} subject(s): {subjects}")]
    Exhausted { count: usize, subjects: String },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Exhausted { .. } => EXIT_EXHAUSTED,
            CliError::Core(e) => match e {
                Error::Parameter(_) => EXIT_USAGE,
                Error::Solver(_) => EXIT_NUMERICAL,
                Error::KeySelectionExhausted { .. } => EXIT_EXHAUSTED,
                _ => EXIT_DATA,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

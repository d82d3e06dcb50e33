use ichloc_core::Error;

/// Exit status contract: 0 success, 2 usage or format error, 3 I/O error,
/// 4 numerical failure.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(Error::Io { .. }) => 3,
            CliError::Core(Error::Numerical(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

use thiserror::Error;

/// CLI failure classes, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(pei_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Core(e) => match e {
                pei_core::Error::NonFinite(_) => 3,
                pei_core::Error::InvalidParameter(_) | pei_core::Error::Checkpoint(_) => 2,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

impl From<pei_core::Error> for CliError {
    fn from(e: pei_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a path to I/O-style failures.
pub(crate) fn io_at(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

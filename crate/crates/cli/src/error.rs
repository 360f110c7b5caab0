use thiserror::Error;

/// A failed command. The variant decides the exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, arguments or input values. Exit status 2.
    #[error("{0}")]
    Usage(String),
    /// I/O, protocol or verification failure. Exit status 1.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn failure(msg: impl Into<String>) -> CliError {
    CliError::Failure(msg.into())
}

/// Adds context to an error and marks it as a failure.
pub(crate) trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> CliResult<T>;
}

impl<T, E: std::fmt::Display> Context<T> for Result<T, E> {
    fn context(self, what: impl std::fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Failure(format!("{what}: {e}")))
    }
}

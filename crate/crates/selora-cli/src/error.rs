//! CLI error taxonomy with a fixed exit-code mapping so harness scripts can
//! distinguish configuration problems (2) from numeric failures (3) and
//! IO/file-format problems (1).

use std::fmt;

use selora_core::SeloraError;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Malformed or invalid configuration / command-line usage.
    Config(String),
    /// Training or evaluation failed numerically.
    Numeric(String),
    /// Filesystem problem.
    Io(String),
    /// Not a checkpoint / metrics file we understand.
    Format(String),
    /// Checkpoint version newer than this binary supports.
    Version(String),
    /// Checksum mismatch: the file is damaged.
    Corruption(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError::Io(message.into())
    }

    /// Core errors raised while validating a configuration.
    pub fn from_core_config(err: SeloraError) -> Self {
        CliError::Config(err.to_string())
    }

    /// Core errors raised while running; numeric failures keep their own
    /// exit code, anything else indicates a config that slipped validation.
    pub fn from_core_run(err: SeloraError) -> Self {
        match err {
            SeloraError::NumericFailure { .. } | SeloraError::NonFinite(_) => {
                CliError::Numeric(err.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Numeric(_) => "numeric",
            CliError::Io(_) => "io",
            CliError::Format(_) => "format",
            CliError::Version(_) => "version",
            CliError::Corruption(_) => "corruption",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            _ => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Numeric(m)
            | CliError::Io(m)
            | CliError::Format(m)
            | CliError::Version(m)
            | CliError::Corruption(m) => m,
        }
    }
}

impl From<SeloraError> for CliError {
    fn from(err: SeloraError) -> Self {
        CliError::from_core_config(err)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // single-line machine-parsable form
        let message = self.message().replace('\n', " ");
        write!(f, "error[{}]: {}", self.category(), message)
    }
}

impl std::error::Error for CliError {}

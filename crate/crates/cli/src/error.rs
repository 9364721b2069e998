//! CLI error type mapping onto the process exit codes: validation problems
//! exit 1, I/O problems exit 2.

use std::fmt;

/// Errors surfaced by the command-line layer.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, malformed file contents, or solver-side rejections.
    Validation(String),
    /// Filesystem and OS-level failures.
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(msg) => write!(f, "error: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<trmf_core::Error> for CliError {
    fn from(e: trmf_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

//! File formats, run-directory management, and command implementations for
//! the `mmmo` binary. Everything algorithmic lives in `mmmo-core`; this
//! crate adds the std-side surface: archive and suite persistence,
//! append-only checkpoint files, thread-pooled evaluation, and reports.

pub mod commands;
pub mod io;
pub mod parallel;
pub mod report;

use std::fmt;

/// CLI failure with its process exit code: usage/validation problems exit 2,
/// runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mmmo_core::Error> for CliError {
    fn from(e: mmmo_core::Error) -> Self {
        match &e {
            mmmo_core::Error::Argument(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors surfaced by archive parsing, merge operators, and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Malformed binary archive data; `offset` is the byte position at which
    /// decoding failed.
    Format { offset: usize, message: String },
    /// Data violates a value-level invariant (non-finite values, bad bounds).
    Validation(String),
    /// Tensor name sets or shapes disagree between archives.
    Structural(String),
    /// A caller-supplied argument violates an operation's precondition.
    Argument(String),
    /// A numerical routine failed (e.g. factorization not positive definite
    /// after jitter escalation).
    Numerical(String),
    /// An objective evaluation failed.
    Evaluation(String),
    /// A checkpoint line could not be decoded; `line` is 1-based.
    Checkpoint { line: usize, message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            Error::Validation(m) => write!(f, "validation error: {m}"),
            Error::Structural(m) => write!(f, "structural mismatch: {m}"),
            Error::Argument(m) => write!(f, "invalid argument: {m}"),
            Error::Numerical(m) => write!(f, "numerical error: {m}"),
            Error::Evaluation(m) => write!(f, "evaluation failed: {m}"),
            Error::Checkpoint { line, message } => {
                write!(f, "checkpoint error at line {line}: {message}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

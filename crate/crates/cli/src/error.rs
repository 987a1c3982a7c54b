use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Missing or malformed input; exit status 2.
    Validation,
    /// Failure while computing; exit status 1.
    Runtime,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Validation, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Runtime, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Validation => 2,
            ErrorClass::Runtime => 1,
        }
    }

    /// Problem with an input artifact.
    pub fn input(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::validation(format!("{}: {err}", path.display()))
    }
}

impl From<ctxmon_core::Error> for CliError {
    fn from(e: ctxmon_core::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

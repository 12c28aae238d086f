use std::fmt;
use std::process::ExitCode;

use crate::io::IoError;

/// Exit-code classes for the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    /// Unreadable or malformed inputs, bad flags.
    Input,
    /// The chat backend could not be set up.
    Backend,
    /// Runs or files that cannot be compared with each other.
    Comparability,
    /// Anything else, including output write failures.
    Internal,
}

impl FailureClass {
    pub fn code(self) -> u8 {
        match self {
            FailureClass::Input => 2,
            FailureClass::Backend => 3,
            FailureClass::Comparability => 4,
            FailureClass::Internal => 5,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: FailureClass,
    pub message: String,
}

impl CliError {
    pub fn new(class: FailureClass, message: impl Into<String>) -> Self {
        CliError {
            class,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(FailureClass::Input, message)
    }

    pub fn backend(message: impl Into<String>) -> Self {
        Self::new(FailureClass::Backend, message)
    }

    pub fn comparability(message: impl Into<String>) -> Self {
        Self::new(FailureClass::Comparability, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(FailureClass::Internal, message)
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.class.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let class = if e.is_input() {
            FailureClass::Input
        } else {
            FailureClass::Internal
        };
        CliError::new(class, e.to_string())
    }
}

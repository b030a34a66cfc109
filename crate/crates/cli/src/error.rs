//! CLI error classification and the documented exit codes.

use localicl_core::CoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Other,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Config, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Data, message: msg.into() }
    }

    pub fn other(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Other, message: msg.into() }
    }

    /// A core error surfaced while validating configuration.
    pub fn from_config_err(e: CoreError) -> Self {
        CliError { kind: ErrorKind::Config, message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Numeric => EXIT_NUMERIC,
            ErrorKind::Other => EXIT_OTHER,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = match &e {
            CoreError::DataRejected(_) => ErrorKind::Data,
            CoreError::Checkpoint(_) => ErrorKind::Data,
            CoreError::NonFinite(_) => ErrorKind::Numeric,
            CoreError::Contract(_) => ErrorKind::Config,
            CoreError::Io(_) => ErrorKind::Other,
        };
        CliError { kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { kind: ErrorKind::Other, message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

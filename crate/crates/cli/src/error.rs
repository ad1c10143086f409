use std::fmt;

use ddm_core::DdmError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DdmError> for CliError {
    fn from(e: DdmError) -> Self {
        let code = match &e {
            DdmError::InvalidInput(_)
            | DdmError::UnsupportedDesign(_)
            | DdmError::InvalidWitness(_)
            | DdmError::Parse { .. }
            | DdmError::ConstantColumn { .. } => EXIT_INVALID,
            DdmError::Csv(c) if !c.is_io_error() => EXIT_INVALID,
            DdmError::Numerical(_)
            | DdmError::DegenerateState { .. }
            | DdmError::StalledWalk { .. }
            | DdmError::Runaway { .. }
            | DdmError::AcceptanceStall { .. } => EXIT_NUMERICAL,
            DdmError::Io(_) | DdmError::Csv(_) => EXIT_IO,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::io(e.to_string())
        } else {
            CliError::invalid(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

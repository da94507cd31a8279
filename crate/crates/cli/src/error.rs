use std::process::ExitCode;

use stabletree::Error as LibError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Lib(#[from] LibError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(LibError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(LibError::Json(e))
    }
}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_ORACLE: u8 = 4;
pub const EXIT_INTERNAL: u8 = 5;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(e) => match e.root_cause() {
                LibError::Config(_) => EXIT_USAGE,
                LibError::OracleIo(_) => EXIT_ORACLE,
                LibError::Contract(_) | LibError::Domain(_) | LibError::DegenerateSplit(_) => EXIT_INTERNAL,
                _ => EXIT_DATA,
            },
        })
    }
}

pub type CliResult<T> = Result<T, CliError>;

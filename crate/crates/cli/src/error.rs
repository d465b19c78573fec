//! CLI-level error type; the variants map onto process exit codes
//! (1 usage, 2 I/O and data, 3 numeric).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) | CliError::Format(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn format(e: impl std::fmt::Display) -> Self {
        CliError::Format(e.to_string())
    }

    pub fn numeric(e: impl std::fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }

    pub fn usage(e: impl std::fmt::Display) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<densefit_core::BodyError> for CliError {
    fn from(e: densefit_core::BodyError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<densefit_core::raster::RasterError> for CliError {
    fn from(e: densefit_core::raster::RasterError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

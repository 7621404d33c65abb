//! Error classification for process exit codes: 0 success, 2 config or
//! schema problems, 3 data problems, 4 predictor-protocol failures.

use ftu_pipeline::PipelineError;
use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or file schema. Exit code 2.
    Config(String),
    /// Missing or invalid data. Exit code 3.
    Data(String),
    /// External predictor or protocol failure. Exit code 4.
    Protocol(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Protocol(_) => 4,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Protocol(msg) => write!(f, "predictor error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

fn is_protocol(err: &PipelineError) -> bool {
    match err {
        PipelineError::Protocol(_) | PipelineError::PredictorFailed { .. } => true,
        PipelineError::Sample { source, .. } => is_protocol(source),
        _ => false,
    }
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        if is_protocol(&err) {
            CliError::Protocol(err.to_string())
        } else {
            CliError::Data(err.to_string())
        }
    }
}

impl From<ftu_core::CoreError> for CliError {
    fn from(err: ftu_core::CoreError) -> Self {
        CliError::Data(err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

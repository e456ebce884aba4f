//! CLI error classes with machine-parsable prefixes and documented exit
//! codes: 2 usage/config, 3 data, 4 checkpoint, 5 io, 1 internal.

use std::fmt;

use kan_mcp::checkpoint::CheckpointError;
use kan_mcp::data::DataError;
use kan_mcp::model::ModelError;
use kan_mcp::viz::VizError;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Data(DataError),
    Checkpoint(CheckpointError),
    Io(std::io::Error),
    Internal(String),
}

impl CliError {
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "UsageError",
            CliError::Config(_) => "ConfigError",
            CliError::Data(_) => "DataError",
            CliError::Checkpoint(_) => "CorruptCheckpoint",
            CliError::Io(_) => "IoError",
            CliError::Internal(_) => "InternalError",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Checkpoint(_) => 4,
            CliError::Io(_) => 5,
            CliError::Internal(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Internal(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
            CliError::Checkpoint(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(io) => CliError::Io(io),
            other => CliError::Data(other),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Io(io) => CliError::Io(io),
            other => CliError::Checkpoint(other),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadConfig { detail } => CliError::Config(detail),
            ModelError::Data(d) => CliError::from(d),
            ModelError::DimMismatch {
                modality,
                expected,
                got,
            } => CliError::Data(DataError::DimMismatch {
                file: format!("{modality} features"),
                expected,
                got,
            }),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<VizError> for CliError {
    fn from(e: VizError) -> Self {
        match e {
            VizError::Io(io) => CliError::Io(io),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

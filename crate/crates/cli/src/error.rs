use std::path::Path;

use egonet::evaluation::EvalError;
use egonet::metrics::MetricError;
use egonet::pagerank::WalkError;
use egonet::sampling::SamplingError;
use egonet::synthgen::GenError;
use egonet::GraphError;
use thiserror::Error;

/// Errors surfaced to the operator, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config values, infeasible generator settings.
    #[error("{0}")]
    Config(String),
    /// Missing or malformed input, exhausted budget, failed reproduction.
    #[error("{0}")]
    Data(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn graph(path: &Path, e: GraphError) -> Self {
        match e {
            GraphError::InvalidArgument(m) => CliError::Internal(m),
            other => CliError::Data(format!("{}: {other}", path.display())),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::InvalidConfig(_) | GenError::Infeasible { .. } => CliError::Config(e.to_string()),
            GenError::NotAvailable(_) | GenError::Graph(_) | GenError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<WalkError> for CliError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::InvalidConfig(_) => CliError::Config(e.to_string()),
            WalkError::UnknownStart(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        match e {
            SamplingError::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("serialization: {e}"))
    }
}

use serde::Serialize;
use thiserror::Error;
use ws4d_core::{DiagnosticsError, DiracError, FieldError, FlowError, ImmersionError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed snapshot {path}: {reason}")]
    Snapshot { path: String, reason: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Dirac(#[from] DiracError),
    #[error(transparent)]
    Immersion(#[from] ImmersionError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{failed} of {total} checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigInvalid",
            CliError::Io { .. } => "Io",
            CliError::Snapshot { .. } => "SnapshotInvalid",
            CliError::Field(_) => "Field",
            CliError::Dirac(_) => "Dirac",
            CliError::Immersion(_) => "Immersion",
            CliError::Flow(_) => "Flow",
            CliError::Diagnostics(_) => "Diagnostics",
            CliError::VerifyFailed { .. } => "VerifyFailed",
        }
    }

    pub fn report(&self) -> ErrorReport {
        ErrorReport { status: "error", kind: self.kind(), exit_code: self.exit_code(), message: self.to_string() }
    }
}

/// Machine-readable failure summary written to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorReport {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("line {line}: invalid probability row ({reason})")]
    InvalidProbabilityRow { line: u64, reason: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: sample {sample} of example {id:?} appears twice")]
    DuplicateCell { line: u64, id: String, sample: usize },
    #[error("example {id:?} has no row for sample {sample}")]
    MissingCell { id: String, sample: usize },
    #[error("line {line}: example {id:?} has label {found}, earlier rows say {expected}")]
    InconsistentLabel { line: u64, id: String, expected: usize, found: usize },
    #[error("invalid synthetic-data spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] referkit::Error),
    #[error(transparent)]
    Toy(#[from] referkit_toybnn::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.into(), message: err.to_string() }
    }

    /// Stable machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::ParseError { .. } => "parse_error",
            CliError::InvalidProbabilityRow { .. } => "invalid_probability_row",
            CliError::DuplicateId { .. } => "duplicate_id",
            CliError::DuplicateCell { .. } => "duplicate_cell",
            CliError::MissingCell { .. } => "missing_cell",
            CliError::InconsistentLabel { .. } => "inconsistent_label",
            CliError::InvalidSpec(_) => "invalid_spec",
            CliError::InvalidConfig(_) => "invalid_config",
            CliError::Io { .. } => "io",
            CliError::Core(_) => "pipeline",
            CliError::Toy(_) => "model",
        }
    }

    /// Process exit code: 2 for bad configuration, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidSpec(_) | CliError::InvalidConfig(_) => 2,
            _ => 1,
        }
    }

    /// `{"error": {"kind": …, "message": …}}`
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

//! Error type shared across the crate.
//!
//! One enum covers every failure class so `Result<T>` composes across
//! modules; variants carry enough context to point at the offending value.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes the engine can report.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes don't line up (matmul, zip, layer chaining, batch sizes).
    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// A computation produced or received a non-finite number.
    #[error("non-finite value: {0}")]
    Numeric(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArg(String),

    /// An API was used out of order (e.g. backward without forward).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A model description is internally inconsistent.
    #[error("invalid model spec: {0}")]
    Spec(String),

    /// A dataset file is malformed or an index is out of range.
    #[error("dataset error: {0}")]
    Data(String),

    /// An experiment config failed validation; one line per problem.
    #[error("invalid config:\n{}", format_issues(.0))]
    Config(Vec<ConfigIssue>),

    /// A learning-rate schedule doesn't cover a requested epoch.
    #[error("schedule error: {0}")]
    Schedule(String),

    /// Run directories being compared are incompatible.
    #[error("comparison error: {0}")]
    Compare(String),

    /// A checkpoint file is corrupt or from an unknown version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Attaches the file path to an I/O error. Bare `io::Error`s name neither
/// file nor operation, which makes failures unactionable from a CLI.
pub fn io_at(path: &std::path::Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// A single problem found while validating an experiment config.
///
/// `path` names the offending key in `section.key` form so the user can fix
/// the file without guessing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

/// All failure modes surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("injection plan error: {0}")]
    Plan(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("routing error: {0}")]
    Routing(String),

    #[error("energy domain error: {0}")]
    Energy(String),

    #[error("metrics input error: {0}")]
    Metrics(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 data, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) => 2,
            Error::Divergence(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

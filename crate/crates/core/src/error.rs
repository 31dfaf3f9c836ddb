//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Broad classification used by front-ends to map errors onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or invalid arguments supplied by the caller.
    Config,
    /// Malformed, missing or degenerate input data.
    Data,
    /// A numerical routine failed (factorization, convergence).
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: row {row}: {message}")]
    Input { path: PathBuf, row: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("{what}: requires {required} periods/points, {available} available")]
    Size {
        what: &'static str,
        required: usize,
        available: usize,
    },

    #[error("empty universe: {0}")]
    EmptyUniverse(String),

    #[error("metric `{0}` produced no usable score for any asset")]
    EmptyScores(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("fold {fold} is degenerate: {n_assets} jointly scored assets (need at least 3)")]
    FoldDegenerate { fold: String, n_assets: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("risk-contribution iteration did not converge after {iterations} sweeps (spread {spread:.3e})")]
    NonConvergence { iterations: usize, spread: f64 },

    #[error("weights reference assets absent from the return matrix: {}", .0.join(", "))]
    MissingAssets(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("generator transport error: {0}")]
    Transport(String),

    #[error("generation rejected: {0}")]
    GenerationRejected(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorClass::Config,
            Error::Numerical(_) | Error::NonConvergence { .. } => ErrorClass::Numerical,
            Error::Input { .. }
            | Error::Validation(_)
            | Error::Size { .. }
            | Error::EmptyUniverse(_)
            | Error::EmptyScores(_)
            | Error::UndefinedCorrelation(_)
            | Error::FoldDegenerate { .. }
            | Error::MissingAssets(_)
            | Error::Transport(_)
            | Error::GenerationRejected(_)
            | Error::Io { .. } => ErrorClass::Data,
        }
    }
}

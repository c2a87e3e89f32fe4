use std::path::PathBuf;

use thiserror::Error;

use crate::data::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for graph with {node_count} nodes")]
    InvalidNode { node: usize, node_count: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate fit: all sample weights are zero")]
    DegenerateFit,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("missing prediction vector for neighbour {neighbour} of node {node}")]
    MissingNeighbour { node: usize, neighbour: usize },

    #[error("unsupported model spec: {0}")]
    UnsupportedSpec(String),

    #[error("problem too large for the exact solver: n*d = {size} exceeds {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("non-finite value in round {round}{}", node.map(|n| format!(" at node {n}")).unwrap_or_default())]
    NonFinite { round: usize, node: Option<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

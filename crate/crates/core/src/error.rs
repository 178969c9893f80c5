use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("unbound graph input `{0}`")]
    Unbound(String),

    #[error("loss node {node} is not scalar (shape {shape:?})")]
    NonScalarLoss { node: usize, shape: Vec<usize> },

    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("degenerate shoulder vector at frame {frame}")]
    DegenerateFrame { frame: usize },

    #[error("zero-length bone at joint {joint} (frame {frame})")]
    ZeroLengthBone { joint: usize, frame: usize },

    #[error("invalid motion: {0}")]
    Motion(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0}")]
    Unsatisfiable(String),

    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

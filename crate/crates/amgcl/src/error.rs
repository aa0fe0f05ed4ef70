//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by graph construction, ingestion, training and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// An edge references a node id outside `[0, num_nodes)`.
    #[error("edge ({src}, {dst}) references a node id outside [0, {num_nodes})")]
    EdgeOutOfRange {
        src: usize,
        dst: usize,
        num_nodes: usize,
    },

    /// Two operands have incompatible shapes.
    #[error("shape mismatch in {op}: left {left:?} vs right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A parse failure in an input file, with its location.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// The clamped propagation system has no unique solution because a
    /// connected component of missing nodes never touches an observed node.
    #[error(
        "singular system: missing component containing node {node} ({size} node(s)) \
         has no observed neighbor"
    )]
    SingularSystem { node: usize, size: usize },

    /// Training produced a non-finite loss.
    #[error("non-finite loss {value} at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, value: f64 },

    /// An invalid configuration value or unknown configuration key.
    #[error("invalid config: {0}")]
    Config(String),

    /// A violated precondition that is not a shape mismatch.
    #[error("{0}")]
    Invalid(String),

    /// An I/O failure, with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

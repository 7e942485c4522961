use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
#[derive(Debug, Error)]
pub enum HdmiError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("isolated node {node} has zero row sum (self-connection weight is 0)")]
    ZeroRowSum { node: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("class {0} has no examples in the training split")]
    MissingClass(usize),

    #[error("cannot form {clusters} clusters from {distinct} distinct embeddings")]
    TooFewPoints { clusters: usize, distinct: usize },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("self-test failed: {0}")]
    SelfTest(String),
}

pub type Result<T, E = HdmiError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> HdmiError {
    HdmiError::Shape {
        op,
        detail: detail.into(),
    }
}

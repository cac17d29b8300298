use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("backpropagation needs a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown layer index {index} (model has {count} layers)")]
    UnknownLayer { index: usize, count: usize },

    #[error("layer {layer} parameter {param} has no gradient buffer")]
    MissingGrad { layer: usize, param: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("no class has a defined average precision")]
    NoDefinedClasses,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

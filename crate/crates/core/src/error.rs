use alloc::string::String;

/// Errors produced by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: usize, n: usize },
    #[error("label {label} at node {node} is not below class count {classes}")]
    LabelOutOfRange { node: usize, label: usize, classes: usize },
    #[error("feature entry ({node}, {dim}) is not finite")]
    NonFiniteFeature { node: usize, dim: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("class {class} has {size} members, need at least {required} for this split")]
    ClassTooSmall { class: usize, size: usize, required: usize },
    #[error("k = {k} must be below the node count {n}")]
    TooManyTokens { k: usize, n: usize },
    #[error("empty selection: {0}")]
    Empty(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}

macro_rules! param_err {
    ($($arg:tt)*) => {
        $crate::error::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

pub(crate) use param_err;
pub(crate) use shape_err;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("unknown op kind `{0}`")]
    UnknownOp(String),
    #[error("{op}: bad attributes: {detail}")]
    Attrs { op: &'static str, detail: String },
    #[error("backward: root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("backward: graph has no differentiable nodes reaching the root")]
    EmptyGraph,
    #[error("adam: parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape {
        op,
        detail: detail.into(),
    })
}

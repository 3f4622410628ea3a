use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("node {node} has an empty neighborhood")]
    EmptyNeighborhood { node: usize },
    #[error("{op} received no input")]
    EmptyInput { op: &'static str },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("tape is closed after backward; record a new one")]
    TapeClosed,
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NotScalar((usize, usize)),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("optimizer step without gradients")]
    MissingGradients,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

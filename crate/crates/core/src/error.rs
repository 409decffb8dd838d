use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("cycle detected through node {0}")]
    Cycle(u64),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(u64, u64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("node {0} is not a leaf")]
    NotALeaf(u64),
    #[error("unknown node id {0}")]
    UnknownNode(u64),
    #[error("node {0} does not appear in any label")]
    UnseenNode(u64),
    #[error("label has no leaves")]
    EmptyLabel,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("operation requires a tree taxonomy (node {0} has several parents)")]
    NotATree(u64),
    #[error("too many leaves for exhaustive enumeration: {0}")]
    TooManyLeaves(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective {0} does not support multi-label data")]
    MultiLabelUnsupported(&'static str),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::NonFinite(_) | Error::Solver(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

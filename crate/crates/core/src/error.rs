use std::path::PathBuf;

/// Coarse classification used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("invalid shape {0:?}: extents must be positive")]
    InvalidShape(Vec<usize>),

    #[error("{op}: expected {expected} elements, got {found}")]
    DataLength { op: &'static str, expected: usize, found: usize },

    #[error("{op}: index {index} out of range for {bound} rows")]
    IndexOutOfRange { op: &'static str, index: usize, bound: usize },

    #[error("{op}: expected {expected} inputs, got {found}")]
    Arity { op: &'static str, expected: usize, found: usize },

    #[error("{op}: inputs are recorded on different tapes")]
    TapeMismatch { op: &'static str },

    #[error("backward: loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error("backward: {0} is not recorded on the loss tape")]
    NotOnTape(&'static str),

    #[error("no gradient for parameter {0}")]
    MissingGradient(usize),

    #[error("gradients were built without create_graph and cannot be differentiated")]
    NotDifferentiable,

    #[error("{op}: expected a square matrix, got {shape:?}")]
    NonSquare { op: &'static str, shape: Vec<usize> },

    #[error("{which}: {axis} {index} has zero norm")]
    ZeroNorm { which: &'static str, axis: &'static str, index: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("edge weights: {0}")]
    EdgeWeights(String),

    #[error("feature width mismatch: expected {expected}, found {found}")]
    FeatureWidth { expected: usize, found: usize },

    #[error("missing required file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("{file}:{line}: node {index} exceeds the {n_nodes} nodes in the graph indicator")]
    NodeOutOfRange { file: String, line: usize, index: usize, n_nodes: usize },

    #[error("{file}:{line}: edge ({u}, {v}) crosses graphs {graph_u} and {graph_v}")]
    CrossGraphEdge { file: String, line: usize, u: usize, v: usize, graph_u: usize, graph_v: usize },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("feature scheme: {0}")]
    Scheme(String),

    #[error("class {0} is absent from the training split")]
    ClassAbsent(usize),

    #[error("parameter file: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_) | Error::ZeroNorm { .. } => ErrorKind::Numeric,
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::MissingFile(_)
            | Error::Parse { .. }
            | Error::NodeOutOfRange { .. }
            | Error::CrossGraphEdge { .. }
            | Error::Dataset(_)
            | Error::Scheme(_)
            | Error::ClassAbsent(_)
            | Error::Checkpoint(_)
            | Error::FeatureWidth { .. }
            | Error::Io { .. } => ErrorKind::Data,
            _ => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

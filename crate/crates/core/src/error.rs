use thiserror::Error;

/// Errors raised anywhere in the geometry pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("evaluation error in `{op}`: {reason}")]
    Evaluation { op: &'static str, reason: String },

    #[error("syntax error at line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("unknown identifier `{name}` at line {line}, column {col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },

    #[error("arity mismatch for `{name}` at line {line}, column {col}: expected {expected}, got {got}")]
    Arity {
        name: String,
        line: usize,
        col: usize,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point {point:?} lies outside the chart domain")]
    OutOfDomain { point: Vec<f64> },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("degenerate immersion at {location}: smallest singular value {sigma:e}")]
    DegenerateImmersion { location: String, sigma: f64 },

    #[error("degenerate plane: {0}")]
    DegeneratePlane(String),

    #[error("critical point of the extrinsic distance: |grad r| = {0:e}")]
    CriticalPoint(f64),

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("hypothesis violated: {reason} ({} offending points)", points.len())]
    HypothesisViolated { reason: String, points: Vec<usize> },

    #[error("empty tail set for exhaustion radius {0}")]
    EmptyTail(f64),

    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

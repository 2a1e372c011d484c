use thiserror::Error;

pub type Result<T> = std::result::Result<T, GemError>;

#[derive(Debug, Error)]
pub enum GemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite value in input")]
    NonFinite,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("class {0} has no examples")]
    EmptyClass(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("denominator matrix is not positive definite; increase gamma")]
    NotPositiveDefinite,

    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("no detector has eigenvalue >= theta = {theta}; lower theta")]
    EmptyDetectorBank { theta: f64 },

    #[error("stratified plan infeasible for count {requested}; closest feasible count is {closest}")]
    InfeasibleStratified { requested: usize, closest: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GemError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GemError::InvalidParameter(msg.into())
    }
}

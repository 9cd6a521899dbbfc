use thiserror::Error;

pub type Result<T> = std::result::Result<T, GdmError>;

#[derive(Debug, Error)]
pub enum GdmError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("empty input: no samples found")]
    EmptyInput,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset contains a single label class; need both +1 and -1")]
    SingleClassLabels,

    #[error("no usable features: first constraint search returned an empty support set")]
    NoUsableFeatures,

    #[error("degenerate dual vector: all entries are zero")]
    DegenerateDual,

    #[error("need at least {needed} distinct features, got {got}")]
    InsufficientFeatures { needed: usize, got: usize },

    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solver did not converge within {iterations} inner steps (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate found before giving up.
        best_alpha: Vec<f64>,
    },

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GdmError {
    /// Process exit code for the CLI: 2 for data problems, 3 for solver
    /// non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            GdmError::NonConvergence { .. } => 3,
            GdmError::InvalidConfig(_) => 1,
            _ => 2,
        }
    }
}

use thiserror::Error;

pub type Result<T, E = DtrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DtrError {
    #[error("stage index {stage} out of range 1..={max}")]
    StageIndex { stage: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular system in {context}: dependent columns {columns:?}")]
    Singular { context: String, columns: Vec<String> },

    #[error("logistic regression did not converge after {iterations} iterations (score max-norm {score_norm:.3e}); {hint}")]
    NonConvergence {
        iterations: usize,
        score_norm: f64,
        hint: String,
    },

    #[error("objective returned non-finite value {value} at {point:?}")]
    NonFinite { point: Vec<f64>, value: f64 },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<DtrError>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{failed} of {total} replicates failed (limit 20%): {last}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        last: String,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("formula `{formula}`: {reason}")]
    Formula { formula: String, reason: String },

    #[error("invalid simulation spec: {0}")]
    Spec(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DtrError {
    pub(crate) fn at_stage(self, stage: usize) -> Self {
        match self {
            e @ DtrError::Stage { .. } => e,
            e => DtrError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        DtrError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            DtrError::Config(_) | DtrError::Formula { .. } | DtrError::Spec(_) => 2,
            DtrError::StageIndex { .. }
            | DtrError::Shape(_)
            | DtrError::Data(_)
            | DtrError::Io { .. }
            | DtrError::Csv(_)
            | DtrError::Json(_) => 3,
            DtrError::Stage { source, .. } => match source.exit_code() {
                2 => 2,
                3 => 3,
                _ => 4,
            },
            DtrError::Singular { .. }
            | DtrError::NonConvergence { .. }
            | DtrError::NonFinite { .. }
            | DtrError::Degenerate(_)
            | DtrError::TooManyFailures { .. } => 4,
        }
    }
}

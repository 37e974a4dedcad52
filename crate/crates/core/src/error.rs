use thiserror::Error;

#[derive(Debug, Error)]
pub enum SnamError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite input at sample {index}")]
    NonFiniteInput { index: usize },

    #[error("non-finite value at epoch {epoch}, batch {batch}{}: {detail}",
        group.map(|g| format!(", group {g}")).unwrap_or_default())]
    Diverged {
        epoch: usize,
        batch: usize,
        group: Option<usize>,
        detail: String,
    },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SnamError {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            SnamError::Diverged { .. } | SnamError::NonFiniteInput { .. } | SnamError::Singular(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, SnamError>;

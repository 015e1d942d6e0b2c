use thiserror::Error;

/// Errors raised by the JACA pipeline.
#[derive(Debug, Error)]
pub enum JacaError {
    #[error("{file}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        file: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{file}: duplicate id `{id}`")]
    DuplicateId { file: String, id: String },
    #[error("{file}: {reason}")]
    Format { file: String, reason: String },
    #[error("invalid label `{value}` for subject `{id}` (expected an integer in 1..={max})")]
    InvalidLabel { id: String, value: String, max: usize },
    #[error("class {0} has no labeled subjects")]
    EmptyClass(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("view {0} appears in no loss term")]
    UnusedView(usize),
    #[error("view {view} is absent for subjects: {}", subjects.join(", "))]
    MissingView { view: usize, subjects: Vec<String> },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl JacaError {
    /// True for failures of the file system rather than of the data itself.
    pub fn is_io(&self) -> bool {
        match self {
            JacaError::Io(_) => true,
            JacaError::Csv(e) => e.is_io_error(),
            JacaError::Json(e) => e.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, JacaError>;

use thiserror::Error;

/// Errors raised by the toolkit. Messages are surfaced verbatim by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// The column-role config is malformed or names a column the data lacks.
    #[error("schema error: {0}")]
    Schema(String),

    /// A record violates a dataset invariant. `row` is 1-based over data rows.
    #[error("validation error at row {row}: {message}")]
    InvalidRecord { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("split error: group {group} has {size} record(s), too few to stratify at test fraction {fraction}")]
    Split {
        group: String,
        size: usize,
        fraction: f64,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("massaging cannot equalize positive rates with the {available} available flip pair(s); best attainable gap is {residual_gap}")]
    MassageInfeasible { available: usize, residual_gap: f64 },

    #[error("training diverged at iteration {iteration} (non-finite objective); try a smaller learning rate")]
    Divergence { iteration: usize },

    #[error("linear program: {0}")]
    Lp(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

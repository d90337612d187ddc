/// Failure of a single forward-model evaluation inside a batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowFailure {
    pub row: usize,
    pub message: String,
}

/// Errors produced by the inversion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Single-point model evaluation failure.
    #[error("model evaluation failed: {0}")]
    Eval(String),

    /// Batch evaluation failures, collected rather than fail-fast so a report
    /// can list every bad row.
    #[error("model evaluation failed on {} of {total} rows (first: row {}: {})",
            failures.len(), failures[0].row, failures[0].message)]
    EvalFailures {
        total: usize,
        failures: Vec<RowFailure>,
    },

    /// Every ratio in the batch is zero: the observed density places no mass
    /// where the push-forward of the prior does.
    #[error("empty posterior: observed density is zero at every push-forward sample")]
    EmptyPosterior,

    #[error("insufficient coverage: {found} sample rows in region, need at least {need}")]
    InsufficientCoverage { found: usize, need: usize },

    /// The observed density is not dominated by the push-forward of the prior.
    #[error("dominance violated: {0}")]
    Dominance(String),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("{0} did not converge")]
    NoConvergence(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

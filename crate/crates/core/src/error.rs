use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular to working precision (|det| = {det:e}, threshold {threshold:e})")]
    SingularMatrix { det: f64, threshold: f64 },

    #[error("enumeration box of {cells} cells exceeds budget {budget}")]
    EnumerationBudgetExceeded { cells: f64, budget: f64 },

    #[error("search space of {size} candidates exceeds budget {budget}")]
    SearchBudgetExceeded { size: f64, budget: f64 },

    #[error("box subdivision exceeded {budget} boxes")]
    RecursionBudgetExceeded { budget: usize },

    #[error("pivot coordinate is zero")]
    ZeroPivot,

    #[error("unsupported dimension d = {0}")]
    UnsupportedDimension(usize),

    #[error("transference hypothesis violated at m = {m}: max distance {value} < C = {c}")]
    HypothesisViolated { m: i64, value: f64, c: f64 },

    #[error("invalid regime: k = {k} must exceed d^2 = {}", d * d)]
    InvalidRegime { d: usize, k: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for the errors that signal an exhausted computational budget.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::EnumerationBudgetExceeded { .. }
                | Error::SearchBudgetExceeded { .. }
                | Error::RecursionBudgetExceeded { .. }
        )
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, found {found}")]
    Shape {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    /// A caller broke an operation's contract (e.g. asked for the standalone
    /// softmax derivative).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite {what} during {phase} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        phase: String,
        epoch: usize,
        batch: usize,
    },

    #[error("wall-time budget of {budget_s:.1}s exceeded after {elapsed_s:.1}s")]
    BudgetExceeded { budget_s: f64, elapsed_s: f64 },

    #[error("incomplete grid: missing cells {0:?}")]
    IncompleteGrid(Vec<String>),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

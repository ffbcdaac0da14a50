use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("unresolved query: {0}")]
    Resolution(String),

    #[error("unsupported join shape: {0}")]
    UnsupportedShape(String),

    #[error("join graph is disconnected: {0}")]
    Disconnected(String),

    #[error("model capability error: {0}")]
    Capability(String),

    #[error("inconsistent model: {0}")]
    ModelInconsistency(String),

    #[error("unseen conditioning value {value:?} for table {table}")]
    UnseenValue { table: String, value: String },

    #[error("the join is empty")]
    EmptyJoin,

    #[error(
        "rejection budget exceeded: {accepted} of {target} rows accepted after {attempts} candidates (acceptance rate {rate:.6})"
    )]
    BudgetExceeded {
        accepted: usize,
        target: usize,
        attempts: usize,
        rate: f64,
    },

    #[error("oracle join exceeds cap: at least {estimate} tuples (cap {cap})")]
    CapExceeded { estimate: usize, cap: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse error classes, used by the command line to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Schema,
    Capability,
    EmptyJoin,
    BudgetExceeded,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Schema(_)
            | Error::Resolution(_)
            | Error::UnsupportedShape(_)
            | Error::Disconnected(_)
            | Error::Ingestion(_) => ErrorClass::Schema,
            Error::Capability(_) | Error::ModelInconsistency(_) | Error::UnseenValue { .. } => {
                ErrorClass::Capability
            }
            Error::EmptyJoin => ErrorClass::EmptyJoin,
            Error::BudgetExceeded { .. } | Error::CapExceeded { .. } => ErrorClass::BudgetExceeded,
            _ => ErrorClass::Other,
        }
    }
}

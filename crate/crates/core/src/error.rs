use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid data: {0}")]
    Domain(String),

    #[error("cannot stratify: class {class} has {count} sample(s), need at least 2")]
    Stratification { class: usize, count: usize },

    #[error("cannot assign {samples} sample(s) to {clients} client(s)")]
    Capacity { samples: usize, clients: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("round {round}: clients {failed:?} failed and accept_failures is false")]
    RoundFailed { round: usize, failed: Vec<usize> },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("ROC curve undefined: {0}")]
    UndefinedCurve(String),

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),
}

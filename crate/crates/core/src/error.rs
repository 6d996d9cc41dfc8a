use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("item index {index} out of range for {n} items")]
    ItemOutOfRange { index: usize, n: usize },

    #[error("comparison of item {0} with itself")]
    SelfComparison(usize),

    #[error("binary choice must be +1 or -1, got {0}")]
    InvalidChoice(f64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not symmetric")]
    NotSymmetric,

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown link function `{0}`")]
    UnknownLink(String),

    #[error("unknown sampling policy `{0}`")]
    UnknownPolicy(String),

    #[error("unknown value mode `{0}`")]
    UnknownMode(String),

    #[error("probability {0} saturates the link; clip it before inverting")]
    Saturated(f64),

    #[error("voter {0} has no records")]
    EmptyWorker(u32),

    #[error("face order violated: {0}")]
    FaceOrder(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("checkpoint mismatch between result tables")]
    CheckpointMismatch,

    #[error("invalid config: field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("corrupt state file: {0}")]
    CorruptState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("capture header is missing required column `{column}`")]
    MissingColumn { column: String },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("cannot infer the tower address: {0}; pass the endpoints explicitly")]
    AmbiguousEndpoints(String),

    #[error("invalid endpoint map: {0}")]
    InvalidEndpoints(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("duplicate bin index {0}")]
    DuplicateBin(u64),

    #[error("bins are not sorted by index (index {next} follows {prev})")]
    UnsortedBins { prev: u64, next: u64 },

    #[error("timestamps decrease at packet {index} ({prev} -> {next})")]
    DecreasingTimestamps { index: usize, prev: f64, next: f64 },

    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    Shape {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("feature dimension mismatch: model expects {model} input features, data has {data}")]
    FeatureDimension { model: usize, data: usize },

    #[error("non-finite value in {what} at component {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("scaler has not been fitted")]
    UnfittedScaler,

    #[error("unknown {kind} `{name}` (valid: {valid})")]
    UnknownName {
        kind: &'static str,
        name: String,
        valid: String,
    },

    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unknown(kind: &'static str, name: &str, valid: &[&str]) -> Self {
        Error::UnknownName {
            kind,
            name: name.to_string(),
            valid: valid.join(", "),
        }
    }
}

use std::path::PathBuf;

/// Errors raised anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite (pivot {pivot:e} at row {row})")]
    NotSpd { row: usize, pivot: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("vector is linearly dependent on the current basis")]
    LinearlyDependent,
    #[error("singular system: {0}")]
    Singular(String),
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("parameter {mu} outside the domain [{lo}, {hi}]")]
    Domain { mu: f64, lo: f64, hi: f64 },
    #[error("reduced system is unstable at mu = {mu}")]
    Unstable { mu: f64 },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("missing state: {0}")]
    State(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("stabilization stalled after {enrichments} enrichments (worst mu = {mu}, value = {value:e})")]
    StabilizationStalled {
        enrichments: usize,
        mu: f64,
        value: f64,
    },
    #[error("snapshot at mu = {mu} is linearly dependent on the trial basis")]
    SnapshotDependent { mu: f64 },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

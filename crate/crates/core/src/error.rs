use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("not a probability vector: {0}")]
    InvalidProbability(String),

    #[error("head/task mismatch: {0}")]
    TaskMismatch(String),

    #[error("invalid drift schedule: {0}")]
    InvalidSchedule(String),

    #[error("dataset too small: {len} instances, need at least {min}")]
    DatasetTooSmall { len: usize, min: usize },

    #[error("out of range: {0}")]
    OutOfRange(String),
}

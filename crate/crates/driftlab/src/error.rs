use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: no column named {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: row {row}, column {column:?}: {reason}")]
    BadCell {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{path}: no data rows")]
    EmptyDataset { path: PathBuf },
    #[error("{path}:{line}: {reason}")]
    Schedule {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("plan line {line}: {reason}")]
    PlanSyntax { line: usize, reason: String },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
    #[error(transparent)]
    Core(#[from] driftlab_core::Error),
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

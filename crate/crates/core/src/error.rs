use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate or missing sample id `{id}` in {source_name}")]
    DuplicateId { id: String, source_name: String },
    #[error("{source_name}: bad value {value:?} at row {row}, column `{column}`")]
    DataFormat {
        source_name: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{0}: no sample is shared by all inputs")]
    EmptyCohort(String),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("need at least {required} samples, got {actual}")]
    InsufficientSamples { required: usize, actual: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("views are not aligned on identical sample ids")]
    Alignment,
    #[error("rank error: {0}")]
    Rank(String),
    #[error("sample `{0}` observes no view")]
    MissingAllViews(String),
    #[error("missing views are only supported by group factor analysis ({0})")]
    MissingViewUnsupported(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("subject `{subject}`: {detail}")]
    DateOrder { subject: String, detail: String },
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("no events among the survival outcomes")]
    NoEvents,
    #[error("empty input")]
    EmptyInput,
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("no comparable pairs for the concordance index")]
    NoComparablePairs,
    #[error("all paired differences are zero")]
    AllTied,
    #[error("linear algebra failure: {0}")]
    Numeric(String),
    #[error("output directory {0} exists and is not empty")]
    OutputExists(PathBuf),
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
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::OutputExists(_) => ErrorClass::Config,
            Error::Numeric(_) | Error::Rank(_) | Error::DegenerateData(_) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

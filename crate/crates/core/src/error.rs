use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments, bad configuration, malformed or inconsistent files.
    Validation,
    /// Required data (a baseline level, a blob, a class) is absent.
    MissingData,
    /// The numbers themselves are unusable: zero norms, empty masks, zero variance.
    Degenerate,
    /// Underlying I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("data integrity error in {path}: {detail}")]
    Integrity { path: PathBuf, detail: String },

    #[error("unsupported format_version {found} (supported: {supported})")]
    Version { found: u32, supported: u32 },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("degenerate vector ({context}): norm {norm:e} is below {threshold:e}")]
    DegenerateVector {
        context: String,
        norm: f64,
        threshold: f64,
    },

    #[error("collinear interference ({context}): orthogonal length {q:e} is below {threshold:e}")]
    Collinear {
        context: String,
        q: f64,
        threshold: f64,
    },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::ShapeMismatch(_)
            | Error::Format(_)
            | Error::Integrity { .. }
            | Error::Version { .. }
            | Error::Json { .. } => ErrorKind::Validation,
            Error::NotFound(_) | Error::MissingData(_) => ErrorKind::MissingData,
            Error::DegenerateVector { .. } | Error::Collinear { .. } | Error::UndefinedStatistic(_) => {
                ErrorKind::Degenerate
            }
            Error::Io { .. } | Error::Csv { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

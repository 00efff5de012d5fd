use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("rank deficient: {0}")]
    Rank(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("subject {subject} is missing surface {surface}")]
    MissingSurface { subject: String, surface: String },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("pipeline aborted: {0}")]
    Aborted(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Convergence { .. } | Error::Rank(_) => 3,
            _ => 2,
        }
    }

    /// Short stage-independent classification used in failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io-error",
            Error::Format(_) => "format-error",
            Error::DegenerateMesh(_) => "degenerate-mesh-error",
            Error::Dimension(_) => "dimension-error",
            Error::Domain(_) => "domain-error",
            Error::Convergence { .. } => "convergence-error",
            Error::Rank(_) => "rank-error",
            Error::DegenerateData(_) => "degenerate-data-error",
            Error::MissingSurface { .. } => "missing-surface-error",
            Error::Mismatch(_) => "mismatch-error",
            Error::Usage(_) => "usage-error",
            Error::Aborted(_) => "aborted",
            Error::Json(_) => "json-error",
            Error::Csv(_) => "csv-error",
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: malformed header, expected `{expected}`, found `{found}`")]
    Header {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {rejected} of {total} rows rejected (more than half); first reasons: {summary}")]
    TooManyRejects {
        path: PathBuf,
        rejected: usize,
        total: usize,
        summary: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown site `{0}`")]
    UnknownSite(String),

    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    Collinear { column: String },

    #[error("design error: {0}")]
    Design(String),

    #[error("empty subset `{0}`")]
    EmptySubset(String),

    #[error("nothing to normalize: no participant has two or more windows with varying values")]
    NothingToNormalize,

    #[error("no included windows")]
    NoIncludedWindows,

    #[error("models are not nested: {0}")]
    NotNested(String),

    #[error("fits were computed on different row sets")]
    RowMismatch,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing likelihood-ratio test for feature `{0}`")]
    MissingLrt(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code for the command-line front end: 2 for empty-result
    /// conditions, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::EmptySubset(_) | Error::NothingToNormalize | Error::NoIncludedWindows => 2,
            _ => 1,
        }
    }
}

use std::path::PathBuf;

/// Errors raised by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A file does not match its declared format. `row` is 1-based where it
    /// applies (dataset rows); zero means the header or the file as a whole.
    #[error("format error in {path} at row {row}: {message}")]
    Format { path: PathBuf, row: usize, message: String },

    /// A data invariant was found broken, e.g. a negative Fisher entry.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// The graph or experiment is missing something an operation needs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mutation would have introduced a cycle.
    #[error("graph contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, row: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            row,
            message: message.into(),
        }
    }
}

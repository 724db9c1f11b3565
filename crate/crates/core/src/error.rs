use std::path::PathBuf;

/// Errors raised anywhere in the scoring, training and evaluation pipeline.
///
/// The variants line up with the process exit codes used by the `clifs`
/// binary (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller passed arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// Configuration is inconsistent (bad dimensions, missing runtime, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input file could not be parsed.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    /// A model runtime or remote client failed.
    #[error("inference error: {0}")]
    Inference(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn inference(msg: impl Into<String>) -> Self {
        Error::Inference(msg.into())
    }

    pub fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 usage/config (including unreadable paths), 3 data
    /// format, 4 inference runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Io { .. } => 2,
            Error::Format { .. } => 3,
            Error::Inference(_) => 4,
        }
    }
}

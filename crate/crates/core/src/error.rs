use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid search space, run configuration or hardware description.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data (shapes, operand ranges, empty inputs).
    #[error("input error: {0}")]
    Input(String),

    /// A request exceeds a fixed capacity (brute-force guard, DSP packing).
    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("numerical error in layer {layer}: {message}")]
    Numeric { layer: String, message: String },

    /// Corrupt or tampered state snapshot.
    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

/// Error category, mapped onto process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Numeric,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Config => 2,
            Category::Numeric => 3,
            Category::Io => 4,
        }
    }
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        match self {
            Error::Config(_) | Error::Input(_) | Error::Capacity(_) | Error::Json { .. } => {
                Category::Config
            }
            Error::Numeric { .. } => Category::Numeric,
            Error::Io { .. } | Error::Integrity(_) => Category::Io,
        }
    }
}

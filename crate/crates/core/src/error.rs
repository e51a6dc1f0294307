use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("shape mismatch on axis `{axis}`: expected {expected}, got {got}")]
    Shape {
        axis: String,
        expected: usize,
        got: usize,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("text encoding failed: {0}")]
    Encoding(String),

    #[error("degenerate feature in row {row}: zero norm before projection normalization")]
    Projection { row: usize },

    #[error("training diverged in {stage} at epoch {epoch}, batch {batch}: non-finite {quantity}")]
    Divergence {
        stage: String,
        epoch: usize,
        batch: usize,
        quantity: String,
    },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn shape(axis: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::Shape {
            axis: axis.into(),
            expected,
            got,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the command-line error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Shape { .. } => "shape",
            Error::Parse { .. } => "parse",
            Error::Index(_) => "index",
            Error::Encoding(_) => "encoding",
            Error::Projection { .. } => "projection",
            Error::Divergence { .. } => "divergence",
            Error::Metric(_) => "metric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}

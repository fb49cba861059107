use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing dataset file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// True for errors caused by input data rather than by numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGraph(_)
                | Error::Parse { .. }
                | Error::MissingFile(_)
                | Error::Io { .. }
                | Error::DegenerateSplit(_)
                | Error::Cache(_)
                | Error::Checkpoint(_)
        )
    }

    pub fn is_numeric_error(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Autodiff(_))
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid shape {shape:?} for {len} elements")]
    Shape { shape: Vec<usize>, len: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("empty sequence: {0}")]
    EmptySequence(&'static str),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown language `{0}`")]
    UnknownLanguage(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}

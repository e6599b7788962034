use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message} at line {line}")]
    Format {
        context: String,
        line: usize,
        message: String,
    },

    #[error("format error: {0}")]
    Malformed(String),

    #[error("span ({begin}, {end}) outside article {article_id} of length {len}")]
    Range {
        article_id: String,
        begin: usize,
        end: usize,
        len: usize,
    },

    #[error("{op}: incompatible shapes {shapes:?}")]
    Shape { op: &'static str, shapes: Vec<Vec<usize>> },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("gradient check failed at coordinate {index} of {param}: {message}")]
    GradCheck {
        param: String,
        index: usize,
        message: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn shape(op: &'static str, shapes: &[&[usize]]) -> Self {
        Error::Shape {
            op,
            shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

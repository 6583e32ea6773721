use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty binary")]
    EmptyBinary,

    #[error("{path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("{0}")]
    Decoding(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("family with zero samples: {0}")]
    EmptyFamily(String),

    #[error("not a dfsmc weight file")]
    BadMagic,

    #[error("weight file: {0}")]
    WeightFile(String),

    #[error("degenerate labels")]
    DegenerateLabels,

    #[error("svm file: {0}")]
    SvmFile(String),

    #[error("{0}")]
    Contract(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

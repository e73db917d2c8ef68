use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shape, symmetry, sign).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error at line {line}: {msg}")]
    ConfigLine { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("assembly error in constraint `{constraint}`: {msg}")]
    Assembly { constraint: String, msg: String },

    #[error("conic solver returned {status}")]
    Solver { status: crate::conic::SolveStatus },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

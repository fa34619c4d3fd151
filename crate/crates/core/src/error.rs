use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document {doc} is not valid UTF-8")]
    Ingestion { doc: String },

    #[error("corpus has no tokens to build a vocabulary from")]
    EmptyVocabulary,

    #[error("corpus has no documents")]
    EmptyCorpus,

    #[error("{what} {value} out of range {range}")]
    OutOfRange {
        what: &'static str,
        value: String,
        range: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("count underflow removing document {doc} from theme {theme}")]
    CountUnderflow { doc: usize, theme: usize },

    #[error("theme {theme} has no probability mass; its word distribution is undefined")]
    DegenerateTheme { theme: usize },

    #[error("document {doc} has zero likelihood under every theme")]
    ZeroLikelihood { doc: usize },

    #[error("log-gamma table queried at {index}, tabulated up to {max}")]
    TableOverflow { index: usize, max: usize },

    #[error("log-posterior decreased from {previous} to {current} at iteration {iteration}")]
    NonMonotone {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("sufficient statistics inconsistent with assignment: {0}")]
    InconsistentStats(String),

    #[error("parse error in {file}:{line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn out_of_range(what: &'static str, value: impl ToString, range: impl ToString) -> Self {
        Error::OutOfRange {
            what,
            value: value.to_string(),
            range: range.to_string(),
        }
    }

    pub(crate) fn parse(file: impl ToString, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            message: message.to_string(),
        }
    }
}

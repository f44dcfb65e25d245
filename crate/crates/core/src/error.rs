use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("reference error in document '{doc_id}': {message}")]
    Reference { doc_id: String, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("missing document(s) in corpus: {}", .0.join(", "))]
    MissingDocuments(Vec<String>),

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing contextual vector for {0}")]
    MissingVector(String),

    #[error("prediction set does not match candidate pairs: {0}")]
    PredictionMismatch(String),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than by usage or bugs.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::Reference { .. }
                | Error::Schema(_)
                | Error::Format { .. }
                | Error::MissingDocuments(_)
                | Error::MissingVector(_)
                | Error::PredictionMismatch(_)
                | Error::Invalid(_)
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),

    #[error("first-stage ranks are not contiguous: rank {missing} is missing")]
    NonContiguousRanks { missing: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate entry for query {query_id:?}, doc {doc_id:?}")]
    DuplicateEntry {
        path: PathBuf,
        line: usize,
        query_id: String,
        doc_id: String,
    },

    #[error("{path}:{line}: missing field {field:?}")]
    MissingField {
        path: PathBuf,
        line: usize,
        field: &'static str,
    },

    #[error("documents referenced by the run are missing from the corpus: {0:?}")]
    MissingDocs(Vec<String>),

    #[error("queries referenced by the run are missing from the queries file: {0:?}")]
    MissingQueries(Vec<String>),

    #[error("template error: unresolved placeholder {0}")]
    Template(String),

    #[error("transient backend error after {attempts} attempt(s): {message}")]
    TransientBackend { attempts: u32, message: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("degenerate response: {reason}; payload: {payload}")]
    DegenerateResponse { reason: String, payload: String },

    #[error("scoring failed for document {doc_id:?}: {source}")]
    Scoring {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("query {query_id:?}, cell {cell}: {source}")]
    Sweep {
        query_id: String,
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn for_doc(self, doc_id: &str) -> Self {
        match self {
            e @ Error::Scoring { .. } => e,
            e => Error::Scoring {
                doc_id: doc_id.to_string(),
                source: Box::new(e),
            },
        }
    }
}

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record violates one of its documented invariants.
    #[error("{0}")]
    Invalid(String),

    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("record {id}: {source}")]
    InRecord {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{pair}: {source}")]
    Scoring {
        pair: String,
        #[source]
        source: Box<Error>,
    },

    #[error("response {index}: {source}")]
    AtResponse {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pair missing from precomputed scores: {0}")]
    MissingPair(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("unparseable judge output: {0:?}")]
    UnparseableJudgeOutput(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0}")]
    Training(String),

    #[error("unsupported model version {0}")]
    UnsupportedModelVersion(u64),

    #[error("model checksum mismatch (expected {expected}, computed {computed})")]
    Checksum { expected: String, computed: String },

    #[error("{0}")]
    Metric(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn at_line(self, line: usize) -> Self {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }

    pub fn in_record(self, id: impl Into<String>) -> Self {
        Error::InRecord {
            id: id.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

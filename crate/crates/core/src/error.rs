use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("duplicate tool id `{0}`")]
    DuplicateTool(String),

    #[error("unknown tool id `{0}`")]
    UnknownTool(String),

    #[error("tool corpus is empty")]
    EmptyCorpus,

    #[error("history is empty; disable bundle acquisition to run without history")]
    ColdStart,

    #[error("probe `{0}` has no terms after tokenization")]
    UnmatchableProbe(String),

    #[error("cannot build an index over zero documents")]
    EmptyIndex,

    #[error("missing embedding for `{0}`")]
    MissingEmbedding(String),

    #[error("embedding for `{0}` has zero norm")]
    ZeroNorm(String),

    #[error("embedding for `{key}` has dimension {found}, expected {expected}")]
    DimensionMismatch { key: String, expected: usize, found: usize },

    #[error("ground-truth tool set is empty")]
    EmptyGroundTruth,

    #[error("{0}")]
    Alignment(String),

    #[error("parse error at {locus}: {reason}")]
    Parse { locus: String, reason: String },

    #[error("{path}: {count} violation(s); first: {first}")]
    Violations { path: PathBuf, count: usize, first: String },

    #[error("bad split: {0}")]
    Split(String),

    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(locus: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            locus: locus.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Llm(_))
    }
}

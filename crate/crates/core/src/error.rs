use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: field `{field}`: {message}")]
    InvalidRecord {
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("feature dimension mismatch: scorer has {expected}, record has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),

    #[error("invalid world configuration: {0}")]
    InvalidWorld(String),

    #[error("enumeration bound exceeded: {needed} cells > limit {limit}")]
    EnumerationBound { needed: usize, limit: usize },

    #[error("examination probability at rank {rank} is zero")]
    ZeroExamination { rank: usize },

    #[error("missing reconstruction pair for query `{0}`")]
    MissingPair(String),

    #[error("interaction on item `{item}` which was not displayed for query `{query_id}`")]
    UndisplayedItem { query_id: String, item: String },

    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("config: unknown stage `{0}`")]
    UnknownStage(String),

    #[error("config: criterion `{criterion}` references unknown statistic `{stat}`")]
    DanglingStatistic { criterion: String, stat: String },

    #[error(
        "config: criterion `{criterion}` in stage `{stage}` references statistic of later stage `{later}`"
    )]
    LaterStageStatistic {
        criterion: String,
        stage: String,
        later: String,
    },

    #[error("config: missing variant `{0}`")]
    MissingVariant(String),

    #[error("config: sufficient criteria declared in more than one stage ({0} and {1})")]
    MultipleSufficientStages(String, String),

    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(line: usize, field: &str, message: impl Into<String>) -> Self {
        Error::InvalidRecord {
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

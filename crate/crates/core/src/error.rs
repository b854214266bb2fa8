use thiserror::Error;

use crate::model::TransformKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("text is empty after trimming")]
    EmptyText,

    #[error("invalid sentence: {0}")]
    InvalidSentence(String),

    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),

    #[error("predictions overlap: {first:?} at {first_span} and {second:?} at {second_span}")]
    OverlappingPredictions {
        first: String,
        first_span: String,
        second: String,
        second_span: String,
    },

    #[error("embedding dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },

    #[error("embedding has zero norm")]
    ZeroNorm,

    #[error("embedding is empty or contains a non-finite value")]
    InvalidEmbedding,

    #[error("span {start}..{end} covers no whole token")]
    EmptySpan { start: usize, end: usize },

    #[error("no scripted {oracle} response for query {query:?}")]
    UnscriptedQuery { oracle: String, query: String },

    #[error("oracle script line {line}: {message}")]
    Script { line: usize, message: String },

    #[error("oracle {oracle} returned an invalid response: {message}")]
    OracleResponse { oracle: String, message: String },

    #[error("backend {backend} unavailable: {message}")]
    BackendUnavailable { backend: String, message: String },

    #[error("backend {backend} returned span {start}..{end} which does not match the sentence text")]
    SpanMismatch {
        backend: String,
        start: usize,
        end: usize,
    },

    #[error("backend {backend} emitted undeclared category {label:?}")]
    UndeclaredCategory { backend: String, label: String },

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("rate limited after {retries} retries")]
    RateLimited { retries: usize },

    #[error("unparseable provider response: {0}")]
    Schema(String),

    #[error("network access is disabled (NO_NETWORK=1)")]
    NetworkDisabled,

    #[error("malformed tree: {0}")]
    Tree(String),

    #[error("no structural rewrite: {0}")]
    NoRewrite(String),

    #[error("{kind:?} inputs are not checked by {relation}")]
    WrongKind {
        kind: TransformKind,
        relation: &'static str,
    },

    #[error("empty sample")]
    EmptySample,

    #[error("division by zero: {0} is zero")]
    DivisionByZero(&'static str),

    #[error("no change for {0:?}")]
    NoChange(String),

    #[error("unmatched issue ids: {0:?}")]
    IdMismatch(Vec<String>),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Input { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether retrying the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            Error::BackendUnavailable { .. } | Error::RateLimited { .. }
        )
    }
}

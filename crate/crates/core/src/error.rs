use std::path::PathBuf;

use thiserror::Error;

use crate::report::Language;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input file not found: {0}")]
    MissingInput(PathBuf),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid report {id}: {reason}")]
    InvalidReport { id: String, reason: String },

    #[error("cannot compare a {pred} prediction with a {reference} reference")]
    LanguageMismatch { pred: Language, reference: Language },

    #[error("report {id}: {} unresolved fragment(s): {}", fragments.len(), fragments.join(" | "))]
    Unresolved { id: String, fragments: Vec<String> },

    #[error("protected-term violations: {}", crate::lexicon::describe_violations(.0))]
    ProtectedTerms(Vec<crate::lexicon::Violation>),

    #[error("invalid protected-term pattern {pattern:?}: {message}")]
    InvalidPattern { pattern: String, message: String },

    #[error("degenerate prompt: system and user text are both empty")]
    DegeneratePrompt,

    #[error("sample {id} has {count} image(s) but image_token_count is 0")]
    ZeroImageTokens { id: String, count: usize },

    #[error("logprob vector has length {got}, sequence has length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("logprob at position {index} is {value}, expected a finite value <= 0")]
    InvalidLogprob { index: usize, value: f64 },

    #[error("BLEU order must be in 1..=4, got {0}")]
    BleuOrder(usize),

    #[error("{0} requires a non-empty corpus")]
    EmptyCorpus(&'static str),

    #[error("no keywords configured for site {0:?}")]
    UnknownSite(String),

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("hypothesis and reference ids do not line up: {}", .0.join(", "))]
    IdMismatch(Vec<String>),

    #[error("table entry not found: {0}")]
    EntryNotFound(String),

    #[error("invalid review decision: {0}")]
    InvalidDecision(String),

    #[error("table is locked by another process: {0}")]
    Locked(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("tokenizer error: {0}")]
    Tokenizer(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path)
        } else {
            Error::Io { path, source }
        }
    }
}

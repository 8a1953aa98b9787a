use thiserror::Error;

/// Crate-wide error type. Variants are grouped by the subsystem that raises
/// them so the CLI can prefix messages with a category.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate id {id:?} within {scope}")]
    DuplicateId { id: String, scope: String },

    #[error("empty {kind} {id:?}: every node must have at least one child")]
    EmptyNode { kind: &'static str, id: String },

    #[error("annotation integrity: {0}")]
    Annotation(String),

    #[error("span ({start}, {end}) {reason}")]
    Span {
        start: usize,
        end: usize,
        reason: &'static str,
    },

    #[error("unknown document id {0:?}")]
    UnknownDoc(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("embedding dimension mismatch at line {line}: expected {expected}, got {got}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },

    #[error("malformed rule {index}: {reason}")]
    MalformedRule { index: usize, reason: String },

    #[error("invalid latent structure: {0}")]
    InvalidStructure(String),

    #[error("question {0:?} has no gold answer index")]
    MissingGold(String),

    #[error("model version mismatch: file has {found:?}, reader expects {expected:?}")]
    VersionMismatch { found: String, expected: String },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Coarse category tag used by the CLI when reporting failures.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::DuplicateId { .. } | Error::EmptyNode { .. } | Error::Annotation(_) | Error::Span { .. } => "corpus",
            Error::UnknownDoc(_) => "index",
            Error::MalformedRule { .. } => "question",
            Error::DimensionMismatch { .. } => "knowledge",
            Error::InvalidStructure(_) => "structure",
            Error::MissingGold(_) | Error::VersionMismatch { .. } | Error::CorruptModel(_) | Error::LayoutMismatch(_) => "model",
            Error::InvalidParam(_) | Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

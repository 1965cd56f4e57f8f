use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate session id `{0}`")]
    DuplicateSession(String),

    #[error("session `{0}` has no utterances after role filtering")]
    EmptySession(String),

    #[error("missing embeddings for sessions: {}", .0.join(", "))]
    MissingEmbedding(Vec<String>),

    #[error("embedding dimension mismatch: expected {expected}, found {found} (session `{session}`)")]
    Dimension {
        expected: usize,
        found: usize,
        session: String,
    },

    #[error("model mode mismatch: expected {expected}, found {found}")]
    Mode { expected: String, found: String },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable identifier for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Degenerate(_) => "degenerate_input",
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::DuplicateSession(_) => "duplicate_session",
            Error::EmptySession(_) => "empty_session",
            Error::MissingEmbedding(_) => "missing_embedding",
            Error::Dimension { .. } => "dimension",
            Error::Mode { .. } => "mode",
            Error::Version(_) => "version",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::Protocol(_) => "protocol",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

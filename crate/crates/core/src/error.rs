use std::io;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid window configuration: window {window}, offset {offset}")]
    InvalidWindowConfig { window: usize, offset: usize },

    #[error("id {id} out of range for table with {rows} rows")]
    IdOutOfRange { id: u32, rows: usize },

    #[error("input of length {len} is too short, need at least {needed}")]
    InputTooShort { len: usize, needed: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate class statistics: no negative samples")]
    DegenerateStats,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("window has width {got}, model expects {expected}")]
    WrongWindowWidth { got: usize, expected: usize },

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("sub-part has no tokens")]
    EmptySubpart,

    #[error("model not loaded: {0}")]
    ModelNotLoaded(&'static str),

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),

    #[error("malformed {what} at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

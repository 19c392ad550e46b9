use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite gradient in parameter tensor {0}")]
    NonFiniteGradient(usize),
    #[error("replay buffer is full of demonstration entries (capacity {0})")]
    BufferFullOfDemos(usize),
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("unknown replay entry id {0}")]
    UnknownEntry(usize),
    #[error("no checkpoint satisfies the expert selection rule:\n{0}")]
    NoQualifyingCheckpoint(String),
    #[error("expert query abandoned (no answer before deadline)")]
    QueryAbandoned,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported checkpoint format {format:?} version {version}")]
    CheckpointVersion { format: String, version: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

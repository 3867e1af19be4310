use thiserror::Error;

/// Errors produced by graph construction, analysis, timing and the wire format.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry at node `{node}`: {detail}")]
    InvalidGeometry { node: String, detail: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("profile error: {0}")]
    Profile(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("payload corrupted: crc {actual:#010x} does not match {expected:#010x}")]
    Corruption { expected: u32, actual: u32 },

    #[error("incomplete frame: need {needed} bytes, have {available}")]
    IncompleteFrame { needed: usize, available: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

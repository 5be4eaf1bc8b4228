use std::io;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed de-identification template at byte offset {offset}")]
    MalformedTemplate { offset: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible generator targets: {0}")]
    Infeasible(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("vocabulary fingerprint mismatch: expected {expected}, found {found}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("{} dangling reference(s): {}", .0.len(), format_refs(.0))]
    DanglingReferences(Vec<(String, usize)>),

    #[error("non-finite loss encountered")]
    NonFiniteLoss,

    #[error("window of length {len} exceeds max_len {max_len}")]
    WindowTooLong { len: usize, max_len: usize },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("parse error: {0}")]
    Parse(String),
}

fn format_refs(refs: &[(String, usize)]) -> String {
    refs.iter()
        .map(|(d, i)| format!("{d}#{i}"))
        .collect::<Vec<_>>()
        .join(", ")
}

pub type Result<T> = std::result::Result<T, Error>;

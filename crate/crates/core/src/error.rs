use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },

    #[error("length error: {0}")]
    Length(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint incompatible with configuration; differing fields: {}", .0.join(", "))]
    Incompatible(Vec<String>),

    #[error("optimizer state error: {0}")]
    State(String),

    #[error("unsupported WAV encoding: format tag {tag:#06x} ({name}) with {bits} bits per sample")]
    UnsupportedFormat { tag: u16, name: &'static str, bits: u16 },

    #[error("input too short: {0}")]
    InputTooShort(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Coarse classification used by the command-line exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Incompatible(_) | Error::Format(_) => ErrorKind::Config,
            Error::Data(_)
            | Error::Io { .. }
            | Error::UnsupportedFormat { .. }
            | Error::InputTooShort(_) => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

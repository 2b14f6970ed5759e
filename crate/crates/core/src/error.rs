use std::io;

use thiserror::Error;

/// Errors raised across the codec, TTS runtime and tooling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("audio buffer is empty")]
    EmptyAudio,
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    RateMismatch { expected: u32, actual: u32 },
    #[error("corrupt code: {0}")]
    CorruptCode(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid stream state: {0}")]
    InvalidState(String),
    #[error("sequence length {len} exceeds maximum {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("graph error: {0}")]
    GraphError(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("segments come from more than one speaker")]
    SpeakerMismatch,
    #[error("event stream contains no audio events")]
    EmptyStream,
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<hound::Error> for Error {
    fn from(err: hound::Error) -> Self {
        match err {
            hound::Error::IoError(e)
                if matches!(e.kind(), io::ErrorKind::UnexpectedEof | io::ErrorKind::Other) =>
            {
                Error::Format(format!("malformed WAV: {e}"))
            }
            hound::Error::IoError(e) => Error::Io(e),
            other => Error::Format(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::InvalidConfig(err.to_string())
    }
}

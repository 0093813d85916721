use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty tensor")]
    EmptyTensor,

    #[error("duplicate index tuple {tuple:?} (line {line})")]
    DuplicateEntry { line: usize, tuple: Vec<usize> },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense tensor of {cells} cells exceeds the limit of {limit}")]
    TooLarge { cells: usize, limit: usize },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("training diverged in epoch {epoch}: {what} is not finite")]
    Diverged { epoch: usize, what: &'static str },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

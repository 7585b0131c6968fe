use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("ingestion error at line {line}: {message}")]
    Ingestion { line: usize, message: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("sampling error for class `{class}`: {message}")]
    Sampling { class: String, message: String },

    #[error("rank error: requested rank {rank}, valid range is 1..={max}")]
    Rank { rank: usize, max: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}: l_sup={l_sup}, l_qur={l_qur}, l_dis={l_dis}"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        l_sup: f64,
        l_qur: f64,
        l_dis: f64,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

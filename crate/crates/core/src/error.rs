use thiserror::Error;

use crate::score::Hand;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("score contains no events")]
    EmptyScore,

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("note-on for pitch {pitch} at byte {offset} overlaps an unpaired note-on")]
    UnpairedNote { pitch: u8, offset: usize },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("observation at t = {t} has zero probability under the model")]
    NumericalUnderflow { t: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{0:?} hand has no score units")]
    OneHandEmpty(Hand),

    #[error("performance contains no note-on events")]
    EmptyPerformance,
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid specification: {0}")]
    Spec(String),

    #[error("unknown label \"{0}\"")]
    UnknownLabel(String),

    #[error("invalid controller: {0}")]
    Fsc(String),

    #[error("network: {0}")]
    Network(String),

    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn syntax(line: usize, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        msg: msg.into(),
    }
}

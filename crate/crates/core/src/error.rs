use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("constants file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("line {line}: bad value for `{key}`: {reason}")]
    Parse {
        key: String,
        line: usize,
        reason: String,
    },

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },

    /// A value violates a documented invariant (sign, range, band).
    #[error("{0}")]
    Invalid(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("weights integrate to {0} over the window; cannot normalize")]
    DegenerateWeight(f64),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

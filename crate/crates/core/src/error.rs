use thiserror::Error;

/// Errors surfaced by the numeric substrate and everything built on it.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CoreError {
    /// Two operands whose shapes cannot be combined by the named operation.
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration that cannot produce a valid task or model.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data contained NaN or infinite entries.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// An alignment kind was used with a mechanism that does not support it.
    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        CoreError::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }
}

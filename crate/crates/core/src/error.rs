use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("non-finite input value {0}")]
    NonFinite(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(
        "sample cost increased at k={k}, L={grid_len}, iteration {iteration}: {previous:.17e} -> {current:.17e}"
    )]
    Divergence {
        k: f64,
        grid_len: usize,
        iteration: usize,
        previous: f64,
        current: f64,
    },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

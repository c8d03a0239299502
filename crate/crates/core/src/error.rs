use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The sampled window does not contain the region a query needs, so the
    /// verdict cannot be certified from the finite configuration.
    #[error("window insufficient: {0}")]
    WindowInsufficient(String),

    /// A moment integral required by the operation diverges for this law.
    #[error("divergent moment: {0}")]
    Divergent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed law spec `{spec}`: {reason}")]
    LawSpec { spec: String, reason: String },

    /// Target probability is never reached inside the bisection bracket.
    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

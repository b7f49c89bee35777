use thiserror::Error;

use crate::money::Money;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("illegal state transition for deal {deal}: {from} -> {to}")]
    IllegalTransition {
        deal: String,
        from: &'static str,
        to: &'static str,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("underfunded: commitments {committed} do not cover fee {fee} plus admin cost {admin}")]
    Underfunded {
        committed: Money,
        fee: Money,
        admin: Money,
    },

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

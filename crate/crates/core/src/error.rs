use thiserror::Error;

use crate::model::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value failed validation. `field` is the dotted path of the offending key.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch: model has {expected} parameters, update has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("node {0} is not live")]
    NotLive(NodeId),

    #[error("admission check against an empty state view")]
    EmptyView,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by a bad experiment description rather than the environment.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::DimensionMismatch { .. } | Error::EmptyView
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error{}: {message}", layer.as_ref().map(|l| format!(" in layer `{l}`")).unwrap_or_default())]
    Shape {
        layer: Option<String>,
        message: String,
    },

    /// A distance was asked for on vectors outside its domain (e.g. negative
    /// components under chi-square).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("weight error: {0}")]
    Weight(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("validation error in layer `{layer}`: expected {expected}, found {found}")]
    Validation {
        layer: String,
        expected: String,
        found: String,
    },

    #[error("unknown descriptor variant `{name}`; expected one of <L>R, <L>AR[alpha], <L>AR[alpha]_<T>, <L1>,<L2>AR[alpha] (e.g. 35R, 35AR2, 33AR_35, 33,35AR)")]
    VariantParse { name: String },

    /// The query has no relevant items in the gallery and must be skipped.
    #[error("query has no relevant gallery items")]
    NoRelevant,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(layer: Option<&str>, message: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.map(str::to_owned),
            message: message.into(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user-supplied data rather than a bug or
    /// a bad configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. }
                | Error::Domain(_)
                | Error::Weight(_)
                | Error::Format { .. }
                | Error::Validation { .. }
                | Error::NoRelevant
                | Error::Io { .. }
                | Error::Image(_)
                | Error::Json(_)
        )
    }
}

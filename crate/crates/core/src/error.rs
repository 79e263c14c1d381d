use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}: malformed header: {detail}")]
    Format { file: String, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("unknown entity id `{0}`")]
    UnknownEntity(String),

    #[error("no ownership path from `{owner}` to `{taxpayer}`")]
    NoPath { owner: String, taxpayer: String },

    #[error("date {date} outside series range {start}..={end}")]
    DateOutOfRange {
        date: crate::Date,
        start: crate::Date,
        end: crate::Date,
    },

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParam { field: &'static str, message: String },

    #[error("infeasible synthetic configuration: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            message: message.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("not enough data: need {required} instances, have {available}")]
    Sizing { required: usize, available: usize },

    #[error("training failed: {0}")]
    Training(String),

    #[error("oracle failed: {0}")]
    Oracle(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("config: {0}")]
    Config(String),

    #[error("batch {batch}, {stage}: {source}")]
    Stage {
        batch: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn at(self, batch: usize, stage: &'static str) -> Self {
        Error::Stage {
            batch,
            stage,
            source: Box::new(self),
        }
    }
}

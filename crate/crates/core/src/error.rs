use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {context}")]
    Numerical { context: String },

    #[error("numerical failure at step {step} (t = {time_ps} ps): {source}")]
    AtStep {
        step: usize,
        time_ps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize, time_ps: f64) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            other => Error::AtStep {
                step,
                time_ps,
                source: Box::new(other),
            },
        }
    }
}

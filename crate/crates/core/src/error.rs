use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, hyperparameters or other settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input data violating its contract (labels outside {0,1}, malformed rows, ...).
    #[error("data error: {0}")]
    Data(String),
    /// A metric that is not defined on the given sample (e.g. AUROC with one class).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    /// Non-finite values where finite ones are required.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

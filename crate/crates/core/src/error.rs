use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape: expected {expected} values, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("invalid state: {0}")]
    State(String),
    #[error("encoding: {0}")]
    Encoding(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("clustering: {0}")]
    Clustering(String),
    #[error("argument: {0}")]
    Argument(String),
    #[error("format: {0}")]
    Format(String),
    #[error("model kind: {0}")]
    Kind(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

use std::path::PathBuf;

use graphmlp_core::tensor::NonFinite;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed or unsupported file contents.
    #[error("format error: {0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] graphmlp_core::Error),
    #[error("epoch {epoch}: non-finite loss; first non-finite value in {at}")]
    NonFinite { epoch: usize, at: NonFinite },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool: 1 usage/config, 2 data,
    /// 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) => 1,
            Error::Shape(_) | Error::Data(_) | Error::Checkpoint(_) | Error::Io { .. } => 2,
            Error::Numerical(_) => 3,
        }
    }
}

impl From<nowcast_autograd::Error> for Error {
    fn from(e: nowcast_autograd::Error) -> Self {
        match e {
            nowcast_autograd::Error::Shape(s) => Error::Shape(s),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

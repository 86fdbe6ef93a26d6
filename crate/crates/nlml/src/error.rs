use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    /// `line` and `column` are 1-based.
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: u64, column: usize, msg: String },

    #[error("{}: {source}", path.display())]
    File { path: PathBuf, source: Box<Error> },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] nlml_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::File { .. }) => e,
            e => Error::File {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }

    /// Process exit status: 1 when a valid run failed numerically, 2 for bad
    /// input, configuration or I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(nlml_core::Error::Diverged(_)) => 1,
            Error::File { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

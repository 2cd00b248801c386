use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the named operation.
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Input outside an operation's mathematical domain.
    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    /// Configuration or input-contract violation.
    #[error("{0}")]
    Invalid(String),

    /// A file exists but its contents do not match the expected layout.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{} has {} invalid line(s):\n  {}", path.display(), errors.len(), errors.join("\n  "))]
    Manifest { path: PathBuf, errors: Vec<String> },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures to reach the filesystem, as opposed to bad contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

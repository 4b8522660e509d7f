use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the named op.
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: Vec<usize>, rhs: Vec<usize> },

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error at offset {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("checkpoint does not match model: {}", .0.join("; "))]
    Load(Vec<String>),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("data generation error: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
    }

    pub(crate) fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format { offset, msg: msg.into() }
    }

    /// Process exit code for the command-line front end:
    /// 1 usage/config, 2 data/format, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Shape { .. } => 1,
            Error::Input(_) | Error::Format { .. } | Error::Load(_) | Error::Generation(_) | Error::Io(_) => 2,
            Error::NonFinite { .. } | Error::Numerical(_) => 3,
        }
    }
}

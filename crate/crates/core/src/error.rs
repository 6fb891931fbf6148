use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input format error in {file}: {reason}")]
    InputFormat { file: String, reason: String },

    #[error("degenerate scale {scale}: rescaled grid would be empty")]
    DegenerateScale { scale: f64 },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("input too large for brute-force evaluation: {0}")]
    Guard(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(file: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InputFormat {
            file: file.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

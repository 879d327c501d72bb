use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Why a run was declared unstable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstabilityKind {
    /// A NaN or infinity appeared in the pressure field.
    NonFinite,
    /// A probe exceeded the run's amplitude limit.
    AmplitudeLimit,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("solver instability ({kind:?}) at step {step_index}")]
    Instability { step_index: u64, kind: InstabilityKind },

    #[error("invalid cavity: {0}")]
    InvalidCavity(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error in {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn is_instability(&self) -> bool {
        matches!(self, Error::Instability { .. })
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

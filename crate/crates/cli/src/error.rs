use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config field `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },

    #[error(transparent)]
    Core(#[from] ea_core::Error),

    #[error("{0} curve(s) failed")]
    CurvesFailed(usize),

    #[error("verification failed for {0} file(s)")]
    VerifyFailed(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input or stale data, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(ea_core::Error::Validation(_) | ea_core::Error::Domain { .. }) => 1,
            CliError::Core(_) | CliError::CurvesFailed(_) => 2,
            _ => 1,
        }
    }
}

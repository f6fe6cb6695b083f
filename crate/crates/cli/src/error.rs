use std::path::PathBuf;

use quadnet::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Input { path: PathBuf, source: Error },

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 1 usage or configuration, 2 physicality, 3 fit non-convergence.
    pub fn exit_code(&self) -> u8 {
        let core = match self {
            CliError::Core(e) | CliError::Input { source: e, .. } => e,
            _ => return 1,
        };
        match core {
            Error::Unphysical(_) | Error::NotSymmetric(_) | Error::NoiseNotPsd(_) => 2,
            Error::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}

use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, bad configuration or missing inputs. Nothing was computed.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error(transparent)]
    Core(#[from] sthsl_core::Error),
}

impl CliError {
    pub fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, detail: impl ToString) -> CliError {
        CliError::Format {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        }
    }

    /// 1 for usage and validation failures, 2 for everything that went
    /// wrong after work started.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(sthsl_core::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}

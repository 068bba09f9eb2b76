use std::io;
use std::path::{Path, PathBuf};

use myograsp_core::Error as CoreError;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl AppError {
    pub fn io(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> AppError {
        let path = path.as_ref().to_path_buf();
        move |source| AppError::Io { path, source }
    }

    pub fn format(path: impl AsRef<Path>, msg: impl Into<String>) -> AppError {
        AppError::Format {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    /// Process exit status: 2 configuration, 3 IO and file format, 4 numeric
    /// failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io { .. } | AppError::Format { .. } => 3,
            AppError::Core(e) => match e {
                CoreError::NonFinite { .. } => 4,
                CoreError::InvalidConfig(_) => 2,
                _ => 1,
            },
        }
    }
}

/// Wraps a csv error with the file it came from.
pub fn csv_error(path: impl AsRef<Path>) -> impl FnOnce(csv::Error) -> AppError {
    let path = path.as_ref().to_path_buf();
    move |e| {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(source) => AppError::Io { path, source },
                _ => unreachable!("checked is_io_error"),
            }
        } else {
            AppError::Format {
                path,
                msg: e.to_string(),
            }
        }
    }
}

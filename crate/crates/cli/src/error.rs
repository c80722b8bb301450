use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration, arguments or input data.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] vclass_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use vclass_core::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Io { .. } => exit::IO,
            CliError::Core(e) => match e {
                E::Io(_) => exit::IO,
                E::Internal(_) => exit::NUMERICAL,
                _ => exit::CONFIG,
            },
        }
    }
}

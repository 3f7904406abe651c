use std::path::{Path, PathBuf};

/// Errors surfaced by the command-line front end, each mapped to an exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Missing or contradictory arguments.
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: decentralab_core::Error,
    },
    #[error(transparent)]
    Core(#[from] decentralab_core::Error),
}

impl CliError {
    pub fn in_file(path: &Path, source: decentralab_core::Error) -> Self {
        CliError::InFile {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Short category label printed ahead of the message.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage error",
            CliError::Io { .. } => "io error",
            CliError::Parse { .. } => "parse error",
            CliError::InFile { .. } | CliError::Core(_) => "data error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

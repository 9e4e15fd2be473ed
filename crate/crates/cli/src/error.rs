use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] balancemix::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("configuration: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 2 for configuration errors, 3 for I/O and file-format errors, 4 for
    /// shape or contract violations.
    pub fn exit_code(&self) -> u8 {
        use balancemix::Error as E;
        match self {
            Self::Config(_) | Self::Core(E::Config(_)) => 2,
            Self::Io { .. } | Self::MissingArtifact(_) | Self::Core(E::Io(_) | E::Json(_) | E::Format(_)) => 3,
            Self::Core(E::Shape(_) | E::Contract(_) | E::Undefined(_)) => 4,
        }
    }
}

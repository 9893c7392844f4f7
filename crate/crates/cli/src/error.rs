use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::manifest::ManifestError;

/// Pipeline stage an error surfaced in, reported as a `[stage]` prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Split,
    Features,
    Train,
    Score,
    Evaluate,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Split => "split",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
            Stage::Write => "write",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("[config] {0}")]
    Config(String),
    #[error("[{stage}] {message}")]
    Data { stage: Stage, message: String },
    #[error("[{stage}] numerical failure: {message}")]
    Numerical { stage: Stage, message: String },
    #[error("[load] {0}")]
    Manifest(#[from] ManifestError),
    #[error("[write] {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn data(stage: Stage, message: impl fmt::Display) -> Self {
        Self::Data {
            stage,
            message: message.to_string(),
        }
    }

    pub fn numerical(stage: Stage, message: impl fmt::Display) -> Self {
        Self::Numerical {
            stage,
            message: message.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data { .. } | Self::Manifest(_) | Self::Io { .. } => 3,
            Self::Numerical { .. } => 4,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

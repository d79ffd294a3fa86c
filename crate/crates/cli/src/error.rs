use std::fmt;

use serde::Serialize;

/// Pipeline stage a command failed in; named in the error output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Config,
    Cloud,
    Session,
    Seal,
    Upload,
    Download,
    Verify,
    Bench,
    Replay,
    Erase,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Cloud => "cloud",
            Stage::Session => "session",
            Stage::Seal => "seal",
            Stage::Upload => "upload",
            Stage::Download => "download",
            Stage::Verify => "verify",
            Stage::Bench => "bench",
            Stage::Replay => "replay",
            Stage::Erase => "erase",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, thiserror::Error, Serialize)]
#[error("{stage} stage failed: {message}")]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

impl StageError {
    pub fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

/// `result.stage(Stage::X)?` tags any displayable error with its stage.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T, StageError>;
}

impl<T, E: fmt::Display> StageExt<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, e))
    }
}

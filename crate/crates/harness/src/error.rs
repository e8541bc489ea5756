use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("cache corrupt: {0}")]
    CacheCorrupt(String),

    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: thermalab_core::Error },

    #[error(transparent)]
    Core(#[from] thermalab_core::Error),

    #[error("report: {0}")]
    Report(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Tag a core error with the pipeline stage it came from.
pub trait StageContext<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T> StageContext<T> for thermalab_core::Result<T> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|source| HarnessError::Stage { stage: name.to_string(), source })
    }
}

use std::path::PathBuf;

use suot_core::SuotError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("bad config: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] SuotError),
    /// A run finished but some result failed its check; details are in the written report.
    #[error("{0}")]
    Failed(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for numerical failures, 2 for configuration and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numerical(_) | HarnessError::Failed(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

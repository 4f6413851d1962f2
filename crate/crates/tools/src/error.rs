use std::io;
use std::path::PathBuf;

pub type Result<T, E = ToolError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ToolError {
    pub fn data(msg: impl Into<String>) -> Self {
        ToolError::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        ToolError::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        ToolError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            ToolError::Config(_) => 1,
            ToolError::Data(_) | ToolError::Io { .. } => 2,
            ToolError::Numerical(_) => 3,
        }
    }
}

impl From<regime_core::Error> for ToolError {
    fn from(e: regime_core::Error) -> Self {
        use regime_core::Error as E;
        match e {
            E::Config(_) | E::TooManyGroups { .. } => ToolError::Config(e.to_string()),
            E::NonFiniteLoss { .. } => ToolError::Numerical(e.to_string()),
            _ => ToolError::Data(e.to_string()),
        }
    }
}

impl From<csv::Error> for ToolError {
    fn from(e: csv::Error) -> Self {
        ToolError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for ToolError {
    fn from(e: serde_json::Error) -> Self {
        ToolError::Data(e.to_string())
    }
}

//! Policy search over adaptive solver controllers: proposers, the staged
//! curriculum loop, its event log and reports.

pub mod curriculum;
pub mod events;
pub mod gen;
pub mod llm;
pub mod proposer;
pub mod report;

use std::path::Path;

use qpolicy_core::tasks::TaskError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("instance load failed: {0}")]
    Load(TaskError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("event log: {0}")]
    EventLog(String),
    #[error("{0}")]
    Execution(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for configuration problems, 2 for failures while executing.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Load(_) => 1,
            HarnessError::Io { .. } | HarnessError::EventLog(_) | HarnessError::Execution(_) => 2,
        }
    }
}

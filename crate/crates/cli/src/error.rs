use thiserror::Error;

/// Failures of a run, each mapped to a process exit status.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("property violation: {0}")]
    Property(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Property(_) => 3,
            RunError::Numerical(_) => 4,
            RunError::Io(_) | RunError::Other(_) => 1,
        }
    }
}

impl From<driftlab_core::Error> for RunError {
    fn from(e: driftlab_core::Error) -> Self {
        use driftlab_core::Error as E;
        match e {
            E::Config(_) | E::Domain(_) => RunError::Config(e.to_string()),
            E::Inconsistent(_) => RunError::Property(e.to_string()),
            E::Degenerate(_) | E::Numerical { .. } => RunError::Numerical(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for RunError {
    fn from(e: serde_json::Error) -> Self {
        RunError::Other(format!("json: {e}"))
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Other(format!("csv: {e}"))
    }
}

use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Experiment(#[from] mimo_ace::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Csv(_) | CliError::Json(_) => "output",
            CliError::Experiment(_) => "experiment",
        }
    }

    /// Process exit status.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable error record; failed runs carry their replay seed.
    pub fn record(&self) -> Value {
        let mut error = json!({
            "kind": self.kind(),
            "message": self.to_string(),
        });
        if let CliError::Experiment(mimo_ace::Error::RunFailed { run, seed, .. }) = self {
            error["run"] = json!(run);
            error["seed"] = json!(seed);
        }
        json!({ "error": error })
    }
}

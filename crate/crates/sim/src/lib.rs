//! Experiment runner for `flowdiv-core`: configuration files, parallel
//! Monte Carlo execution of the standard experiments and CSV output.

pub mod config;
pub mod experiments;
pub mod output;

use flowdiv_core::ErrorKind;

pub use config::{config_hash, parse_config, serialize_config};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("{0}")]
    Core(#[from] flowdiv_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    /// 2 for configuration problems, 3 for numerical degeneracy, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            SimError::Core(e) => match e.kind() {
                ErrorKind::Config | ErrorKind::Bounds | ErrorKind::Shape => 2,
                ErrorKind::Degenerate | ErrorKind::Singular => 3,
            },
            SimError::Io { .. } | SimError::Csv(_) => 1,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

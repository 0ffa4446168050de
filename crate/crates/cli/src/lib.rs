//! Command implementations behind the `cmdtriage` binary: one-shot triage,
//! dataset evaluation, simulator batches, threshold calibration and the
//! session service used by the console.

use std::path::{Path, PathBuf};

use cmdtriage_core::embed::EmbedError;
use cmdtriage_core::eval::EvalError;
use cmdtriage_core::gateway::GatewayError;
use cmdtriage_core::prompt::PromptError;
use cmdtriage_core::sim::SimError;
use cmdtriage_core::triage::{TriageError, TriageLabel};
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod serve;

pub use config::{BackendConfig, EngineConfig, LoadedConfig, PathsConfig};

/// Version of every JSON document the commands print.
pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_CLEAR: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_AMBIGUOUS: i32 = 10;
pub const EXIT_INFEASIBLE: i32 = 11;

pub fn exit_code(label: TriageLabel) -> i32 {
    match label {
        TriageLabel::Clear => EXIT_CLEAR,
        TriageLabel::Ambiguous => EXIT_AMBIGUOUS,
        TriageLabel::Infeasible => EXIT_INFEASIBLE,
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

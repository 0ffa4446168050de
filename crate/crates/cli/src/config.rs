//! Engine configuration file and the pipeline built from it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use cmdtriage_core::embed::load_table;
use cmdtriage_core::eval::TimingVariant;
use cmdtriage_core::gateway::{BackendHandle, HttpBackend, HttpConfig, MockBackend};
use cmdtriage_core::prompt::load_context_set;
use cmdtriage_core::triage::{FeasibilityKeywords, TriageConfig, TriagePipeline};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock {
        rules_path: PathBuf,
        #[serde(default)]
        seed: u64,
    },
    Http(HttpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    pub embedding_table: PathBuf,
    pub context_set: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

/// The single JSON document every command reads. Relative paths are taken
/// from the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub backend: BackendConfig,
    pub triage: TriageConfig,
    pub paths: PathsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_keywords: Option<FeasibilityKeywords>,
    #[serde(default)]
    pub timing_variant: TimingVariant,
}

/// A config together with the directory its relative paths hang off.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: EngineConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: EngineConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { config, base_dir };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.config.triage.validate()?;
        let mut required = vec![&self.config.paths.embedding_table, &self.config.paths.context_set];
        if let BackendConfig::Mock { rules_path, .. } = &self.config.backend {
            required.push(rules_path);
        }
        for p in required {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(CliError::Config(format!("referenced file {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> Option<PathBuf> {
        self.config.paths.dataset.as_deref().map(|p| self.resolve(p))
    }

    pub fn backend(&self) -> Result<BackendHandle, CliError> {
        Ok(match &self.config.backend {
            BackendConfig::Mock { rules_path, seed } => Arc::new(MockBackend::from_file(self.resolve(rules_path), *seed)?),
            BackendConfig::Http(http) => Arc::new(HttpBackend::new(http.clone())?),
        })
    }

    pub fn pipeline(&self) -> Result<TriagePipeline, CliError> {
        let table = load_table(self.resolve(&self.config.paths.embedding_table))?;
        let contexts = load_context_set(self.resolve(&self.config.paths.context_set))?;
        let pipeline = TriagePipeline::new(self.backend()?, Arc::new(table), contexts);
        Ok(match &self.config.feasibility_keywords {
            Some(k) => pipeline.with_keywords(k.clone()),
            None => pipeline,
        })
    }
}

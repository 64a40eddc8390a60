use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasetgen::PromptConfig;
use crate::error::{Error, Result};
use crate::lexicon::JoinRule;
use crate::metrics::MetricConfig;
use crate::segmenter::Delimiters;

/// Resolved settings for a run. Precedence: command-line flags, then the
/// config file, then these defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub delimiters: Delimiters,
    pub join: JoinRule,
    pub prompts: PromptConfig,
    pub image_token_count: usize,
    pub metrics: MetricConfig,
    pub keywords_path: Option<PathBuf>,
    pub protected_terms_path: Option<PathBuf>,
    pub table_path: Option<PathBuf>,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            delimiters: Delimiters::default(),
            join: JoinRule::default(),
            prompts: PromptConfig::default(),
            image_token_count: 1,
            metrics: MetricConfig::default(),
            keywords_path: None,
            protected_terms_path: None,
            table_path: None,
        }
    }
}

impl ToolConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ToolConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ToolConfig::from_toml(&text)
    }

    pub fn check(&self) -> Result<()> {
        if self.delimiters.chars().next().is_none() {
            return Err(Error::Config("delimiter set must not be empty".into()));
        }
        if self.image_token_count == 0 {
            return Err(Error::Config("image_token_count must be positive".into()));
        }
        if !(self.metrics.cider_scale.is_finite() && self.metrics.cider_scale > 0.0) {
            return Err(Error::Config("cider_scale must be positive".into()));
        }
        if !(self.metrics.rouge_beta.is_finite() && self.metrics.rouge_beta > 0.0) {
            return Err(Error::Config("rouge_beta must be positive".into()));
        }
        Ok(())
    }
}

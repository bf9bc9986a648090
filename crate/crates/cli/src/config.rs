//! Key-value configuration file (TOML).
//!
//! Lookup order: `--config PATH`, then `$OBSOLENS_CONFIG`, then
//! `obsolens.toml` in the working directory if present, else defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use obsolens_core::diagnostics::{default_punctuation_tags, DiagnosticsConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_ENV: &str = "OBSOLENS_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "obsolens.toml";
pub const DEFAULT_SEED: u64 = 1900;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Patterns used when a command gets no `--pattern`.
    pub patterns: Vec<String>,
    pub alpha: f64,
    pub negation_window: usize,
    pub fragmentation_min_genres: usize,
    pub coverage_threshold: f64,
    pub punctuation_tags: BTreeSet<String>,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        let d = DiagnosticsConfig::default();
        Self {
            patterns: vec!["in order that".into()],
            alpha: d.alpha,
            negation_window: d.negation_window,
            fragmentation_min_genres: d.fragmentation_min_genres,
            coverage_threshold: d.coverage_threshold,
            punctuation_tags: default_punctuation_tags(),
            seed: DEFAULT_SEED,
        }
    }
}

impl Config {
    pub fn diagnostics(&self) -> DiagnosticsConfig {
        DiagnosticsConfig {
            alpha: self.alpha,
            negation_window: self.negation_window,
            fragmentation_min_genres: self.fragmentation_min_genres,
            position_rule: Default::default(),
            punctuation_tags: self.punctuation_tags.iter().map(|t| t.to_lowercase()).collect(),
            coverage_threshold: self.coverage_threshold,
        }
    }

    pub fn from_toml(path: &Path, text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.to_owned(),
            reason: e.message().to_owned(),
        })?;
        cfg.diagnostics().validate().map_err(|e| CliError::Config {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        Ok(cfg)
    }
}

/// Resolves and loads the configuration. An explicitly named file (flag or
/// environment) must exist; the implicit `obsolens.toml` is optional.
pub fn load(explicit: Option<&Path>) -> Result<Config> {
    let env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let (path, required) = match (explicit, env) {
        (Some(p), _) => (p.to_owned(), true),
        (None, Some(p)) => (p, true),
        (None, None) => (PathBuf::from(DEFAULT_CONFIG_FILE), false),
    };
    match std::fs::read_to_string(&path) {
        Ok(text) => Config::from_toml(&path, &text),
        Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(Config::default()),
        Err(source) => Err(CliError::Read { path, source }),
    }
}

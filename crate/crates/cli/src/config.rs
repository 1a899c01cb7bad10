//! Run configuration shared by all subcommands, loadable from TOML or JSON.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use confx_core::agent::{PromptStrategy, RepairConfig};
use confx_core::explorer::{ExploreOptions, DEFAULT_DEPTH_BOUND, DEFAULT_RUNS};
use confx_core::extractor::FilterStage;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid setting `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

/// Which model client to use.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LlmBackend {
    Live,
    /// Scripted responses. Without a path, the fixture named by the
    /// program's manifest is used.
    #[default]
    Mock,
    MockFile(PathBuf),
}

impl FromStr for LlmBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(LlmBackend::Live),
            "mock" => Ok(LlmBackend::Mock),
            _ => match s.strip_prefix("mock:") {
                Some(path) if !path.is_empty() => Ok(LlmBackend::MockFile(PathBuf::from(path))),
                _ => Err(format!("unknown llm backend `{s}` (expected live, mock or mock:<fixture>)")),
            },
        }
    }
}

impl fmt::Display for LlmBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LlmBackend::Live => f.write_str("live"),
            LlmBackend::Mock => f.write_str("mock"),
            LlmBackend::MockFile(p) => write!(f, "mock:{}", p.display()),
        }
    }
}

impl Serialize for LlmBackend {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LlmBackend {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub depth_bound: usize,
    pub runs: usize,
    pub seed: u64,
    pub strategy: PromptStrategy,
    pub stage: FilterStage,
    pub llm: LlmBackend,
    pub max_attempts: usize,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Config {
    fn default() -> Self {
        let r = RepairConfig::default();
        Config {
            depth_bound: DEFAULT_DEPTH_BOUND,
            runs: DEFAULT_RUNS,
            seed: 0,
            strategy: r.strategy,
            stage: r.stage,
            llm: LlmBackend::Mock,
            max_attempts: r.max_attempts,
            temperature: r.temperature,
            top_p: r.top_p,
        }
    }
}

impl Config {
    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let parse_err = |message: String| ConfigError::Parse { path: path.into(), message };
        let cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field, message: &str| Err(ConfigError::Invalid { field, message: message.into() });
        if self.depth_bound == 0 {
            return bad("depth_bound", "must be positive");
        }
        if self.runs == 0 {
            return bad("runs", "must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts", "must be positive");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad("temperature", "must lie in [0, 2]");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad("top_p", "must lie in (0, 1]");
        }
        Ok(())
    }

    pub fn explore_options(&self) -> ExploreOptions {
        ExploreOptions { depth_bound: self.depth_bound }
    }

    pub fn repair_config(&self, file_name: &str) -> RepairConfig {
        RepairConfig {
            strategy: self.strategy,
            stage: self.stage,
            max_attempts: self.max_attempts,
            temperature: self.temperature,
            top_p: self.top_p,
            runs: self.runs,
            seed: self.seed,
            depth_bound: self.depth_bound,
            file_name: file_name.to_string(),
            ..RepairConfig::default()
        }
    }
}

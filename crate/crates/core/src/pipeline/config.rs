use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generation::SamplingConfig;
use crate::llm::{ChatBackend, Gateway, GatewayConfig, RemoteChatBackend, RemoteChatConfig, ScriptedBackend, TemplateSet};
use crate::schema_link::LinkConfig;
use crate::selection::SelectionConfig;
use crate::value_index::{Embedder, RemoteEmbedder, RemoteEmbedderConfig, TrigramEmbedder};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("backend setup failed: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    /// Script file, or a directory whose `*.json` files are merged in name order.
    pub script: Option<PathBuf>,
    pub url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub request_timeout_secs: u64,
}

impl Default for BackendSettings {
    fn default() -> Self {
        let g = GatewayConfig::default();
        BackendSettings {
            kind: BackendKind::Scripted,
            script: None,
            url: None,
            model: None,
            api_key_env: None,
            retries: g.retries,
            backoff_ms: g.backoff.as_millis() as u64,
            max_in_flight: g.max_in_flight,
            request_timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    #[default]
    Trigram,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderSettings {
    pub kind: EmbedderKind,
    pub dimension: usize,
    pub url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
}

impl Default for EmbedderSettings {
    fn default() -> Self {
        EmbedderSettings { kind: EmbedderKind::Trigram, dimension: 256, url: None, model: None, api_key_env: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Values retrieved per TEXT column.
    pub top_k_values: usize,
    pub theta_val: f64,
    pub theta_conf: f64,
    /// Clusters reviewed on the low-confidence path.
    pub adjudication_k: usize,
    pub vote_samples: usize,
    pub vote_temperature: f64,
    /// Samples per LLM sub-task.
    pub budget: usize,
    pub temperature: f64,
    pub fewshot_n: usize,
    pub timeout_secs: u64,
    /// Questions run concurrently by `bench`.
    pub case_parallelism: usize,
    /// Candidates revised concurrently within a question.
    pub chain_parallelism: usize,
    pub template_dir: Option<PathBuf>,
    pub fewshot_path: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub backend: BackendSettings,
    pub embedder: EmbedderSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sel = SelectionConfig::default();
        PipelineConfig {
            top_k_values: crate::value_index::DEFAULT_TOP_K,
            theta_val: crate::schema_link::DEFAULT_THETA_VAL,
            theta_conf: sel.theta_conf,
            adjudication_k: sel.top_k,
            vote_samples: sel.vote_samples,
            vote_temperature: sel.vote_temperature,
            budget: crate::generation::DEFAULT_BUDGET,
            temperature: crate::generation::DEFAULT_TEMPERATURE,
            fewshot_n: crate::generation::DEFAULT_FEWSHOT,
            timeout_secs: crate::executor::DEFAULT_TIMEOUT.as_secs(),
            case_parallelism: 1,
            chain_parallelism: 8,
            template_dir: None,
            fewshot_path: None,
            index_dir: None,
            backend: BackendSettings::default(),
            embedder: EmbedderSettings::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be in [0, 1], got {v}")))
    }
}

impl PipelineConfig {
    /// Reads a TOML file; relative paths inside it resolve against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.template_dir, &mut self.fewshot_path, &mut self.index_dir, &mut self.backend.script] {
            if let Some(path) = p.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        unit("theta_val", self.theta_val)?;
        unit("theta_conf", self.theta_conf)?;
        let positive = [
            ("top_k_values", self.top_k_values),
            ("budget", self.budget),
            ("adjudication_k", self.adjudication_k),
            ("timeout_secs", self.timeout_secs as usize),
            ("case_parallelism", self.case_parallelism),
            ("chain_parallelism", self.chain_parallelism),
            ("backend.max_in_flight", self.backend.max_in_flight),
            ("embedder.dimension", self.embedder.dimension),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be at least 1")));
            }
        }
        if self.vote_samples.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!("vote_samples must be odd, got {}", self.vote_samples)));
        }
        if self.temperature < 0.0 || self.vote_temperature < 0.0 {
            return Err(ConfigError::Invalid("temperatures must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig { budget: self.budget, temperature: self.temperature }
    }

    pub fn link_config(&self) -> LinkConfig {
        LinkConfig { theta_val: self.theta_val, sampling: self.sampling(), fewshot_n: self.fewshot_n }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig {
            theta_conf: self.theta_conf,
            top_k: self.adjudication_k,
            vote_samples: self.vote_samples,
            vote_temperature: self.vote_temperature,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_secs)
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        let templates = match &self.template_dir {
            Some(dir) => TemplateSet::with_overrides(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?,
            None => TemplateSet::builtin(),
        };
        let b = &self.backend;
        let backend: Arc<dyn ChatBackend> = match b.kind {
            BackendKind::Scripted => {
                let path = b.script.as_ref().ok_or_else(|| ConfigError::Invalid("scripted backend needs backend.script".into()))?;
                Arc::new(load_script(path)?)
            }
            BackendKind::Remote => {
                let url = b.url.clone().ok_or_else(|| ConfigError::Invalid("remote backend needs backend.url".into()))?;
                let model = b.model.clone().ok_or_else(|| ConfigError::Invalid("remote backend needs backend.model".into()))?;
                let config = RemoteChatConfig { url, model, api_key: api_key(&b.api_key_env)?, timeout_secs: b.request_timeout_secs };
                Arc::new(RemoteChatBackend::new(config).map_err(|e| ConfigError::Backend(e.to_string()))?)
            }
        };
        let gw = GatewayConfig { retries: b.retries, backoff: Duration::from_millis(b.backoff_ms), max_in_flight: b.max_in_flight };
        Ok(Gateway::new(backend, templates, gw))
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, ConfigError> {
        let e = &self.embedder;
        match e.kind {
            EmbedderKind::Trigram => Ok(Arc::new(TrigramEmbedder::new(e.dimension))),
            EmbedderKind::Remote => {
                let url = e.url.clone().ok_or_else(|| ConfigError::Invalid("remote embedder needs embedder.url".into()))?;
                let model = e.model.clone().ok_or_else(|| ConfigError::Invalid("remote embedder needs embedder.model".into()))?;
                let config = RemoteEmbedderConfig { url, model, dimension: e.dimension, api_key: api_key(&e.api_key_env)?, batch_size: 128 };
                Ok(Arc::new(RemoteEmbedder::new(config).map_err(|e| ConfigError::Backend(e.to_string()))?))
            }
        }
    }
}

fn api_key(var: &Option<String>) -> Result<Option<String>, ConfigError> {
    match var {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| ConfigError::Invalid(format!("environment variable {name} is not set"))),
    }
}

/// Loads one script file, or merges every `*.json` in a directory in file-name order.
pub fn load_script(path: &Path) -> Result<ScriptedBackend, ConfigError> {
    let read = |p: &Path| ScriptedBackend::from_file(p).map_err(|e| ConfigError::Backend(e.to_string()));
    if !path.is_dir() {
        return read(path);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| ConfigError::Read { path: path.to_path_buf(), message: e.to_string() })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut merged = ScriptedBackend::default();
    for f in files {
        merged.extend(read(&f)?);
    }
    Ok(merged)
}

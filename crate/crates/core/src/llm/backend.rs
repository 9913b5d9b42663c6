use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatCall, Completion};

/// How the scripted backend reports token usage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UsageMode {
    Fixed([u64; 2]),
    Named(NamedUsage),
}

impl Default for UsageMode {
    fn default() -> Self {
        UsageMode::Named(NamedUsage::Zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedUsage {
    Zero,
    Estimate,
}

impl UsageMode {
    fn report(self) -> Option<(u64, u64)> {
        match self {
            UsageMode::Fixed([i, o]) => Some((i, o)),
            UsageMode::Named(NamedUsage::Estimate) => None,
            UsageMode::Named(NamedUsage::Zero) => Some((0, 0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptedFailure {
    Transient,
    Fatal,
}

/// One scripted response rule. The first matching rule answers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Template id, or `*` for any.
    pub template: String,
    /// Substrings that must all occur in the rendered prompt.
    #[serde(default)]
    pub contains: Vec<String>,
    /// Substrings that must occur in the named placeholder values.
    #[serde(default)]
    pub placeholders: BTreeMap<String, String>,
    /// Sample `i` receives `completions[i % len]`.
    #[serde(default)]
    pub completions: Vec<String>,
    #[serde(default)]
    pub fail: Option<ScriptedFailure>,
    #[serde(default)]
    pub usage: Option<UsageMode>,
}

impl ScriptRule {
    pub fn new(template: &str, completions: &[&str]) -> Self {
        ScriptRule {
            template: template.to_string(),
            completions: completions.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn containing(mut self, needle: &str) -> Self {
        self.contains.push(needle.to_string());
        self
    }

    /// Requires placeholder `name` to contain `needle`.
    pub fn with_placeholder(mut self, name: &str, needle: &str) -> Self {
        self.placeholders.insert(name.to_string(), needle.to_string());
        self
    }

    pub fn failing(mut self, kind: ScriptedFailure) -> Self {
        self.fail = Some(kind);
        self
    }

    fn matches(&self, call: &ChatCall<'_>) -> bool {
        (self.template == "*" || self.template == call.template)
            && self.contains.iter().all(|n| call.prompt.contains(n.as_str()))
            && self
                .placeholders
                .iter()
                .all(|(k, n)| call.placeholders.get(k).is_some_and(|v| v.contains(n.as_str())))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub usage: Option<UsageMode>,
    pub rules: Vec<ScriptRule>,
}

/// Deterministic, stateless test double answering from a rule list.
#[derive(Debug, Clone, Default)]
pub struct ScriptedBackend {
    script: Script,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        ScriptedBackend { script: Script { usage: None, rules } }
    }

    pub fn with_usage(mut self, usage: UsageMode) -> Self {
        self.script.usage = Some(usage);
        self
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let script = match serde_json::from_str::<Script>(text) {
            Ok(s) => s,
            Err(_) => Script { usage: None, rules: serde_json::from_str(text)? },
        };
        Ok(ScriptedBackend { script })
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Fatal(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| BackendError::Fatal(format!("{}: {e}", path.display())))
    }

    /// Appends the rules of `other` after this script's rules.
    pub fn extend(&mut self, other: ScriptedBackend) {
        self.script.rules.extend(other.script.rules);
        if self.script.usage.is_none() {
            self.script.usage = other.script.usage;
        }
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, call: &ChatCall<'_>) -> Result<Completion, BackendError> {
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| r.matches(call))
            .ok_or_else(|| BackendError::Fatal(format!("no scripted completion for template `{}`", call.template)))?;
        match rule.fail {
            Some(ScriptedFailure::Transient) => return Err(BackendError::Transient("scripted transient failure".into())),
            Some(ScriptedFailure::Fatal) => return Err(BackendError::Fatal("scripted failure".into())),
            None => {}
        }
        if rule.completions.is_empty() {
            return Err(BackendError::Fatal(format!("rule for `{}` has no completions", rule.template)));
        }
        let text = rule.completions[call.sample_index % rule.completions.len()].clone();
        let usage = rule.usage.or(self.script.usage).unwrap_or_default().report();
        Ok(Completion { text, usage })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteChatConfig {
    /// Full chat-completions endpoint URL.
    pub url: String,
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

/// Chat-completions-compatible HTTP backend; one choice per request.
pub struct RemoteChatBackend {
    config: RemoteChatConfig,
    client: reqwest::blocking::Client,
}

impl RemoteChatBackend {
    pub fn new(config: RemoteChatConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        Ok(RemoteChatBackend { config, client })
    }
}

pub(crate) fn classify_status(status: reqwest::StatusCode, body: String) -> BackendError {
    if status.as_u16() == 429 || status.is_server_error() {
        BackendError::Transient(format!("HTTP {status}: {body}"))
    } else {
        BackendError::Fatal(format!("HTTP {status}: {body}"))
    }
}

pub(crate) fn parse_chat_response(body: &Value) -> Result<Completion, BackendError> {
    let text = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))?;
    let usage = match (
        body.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        body.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(i), Some(o)) => Some((i, o)),
        _ => None,
    };
    Ok(Completion { text: text.to_string(), usage })
}

impl ChatBackend for RemoteChatBackend {
    fn complete(&self, call: &ChatCall<'_>) -> Result<Completion, BackendError> {
        let payload = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": call.prompt}],
            "temperature": call.temperature,
            "max_tokens": call.max_tokens,
            "n": 1,
        });
        let mut req = self.client.post(&self.config.url).json(&payload);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(classify_status(status, resp.text().unwrap_or_default()));
        }
        let body: Value = resp.json().map_err(|e| BackendError::Transient(e.to_string()))?;
        parse_chat_response(&body)
    }
}

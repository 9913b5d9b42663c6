//! Chat-completion access, sampling, tag extraction and token accounting.

mod backend;
pub mod templates;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backend::{NamedUsage, RemoteChatBackend, RemoteChatConfig, Script, ScriptRule, ScriptedBackend, ScriptedFailure, UsageMode};
pub use templates::{TemplateError, TemplateSet};

use crate::sync::Semaphore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ValueRetrieval,
    SchemaLinking,
    Generation,
    Toolchain,
    Selection,
}

impl Stage {
    pub const ALL: [Stage; 5] =
        [Stage::ValueRetrieval, Stage::SchemaLinking, Stage::Generation, Stage::Toolchain, Stage::Selection];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub template: String,
    pub placeholders: BTreeMap<String, String>,
    pub samples: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn new(template: &str) -> Self {
        LlmRequest {
            template: template.to_string(),
            placeholders: BTreeMap::new(),
            samples: 1,
            temperature: 0.0,
            max_tokens: 2048,
        }
    }

    pub fn with(mut self, name: &str, value: impl Into<String>) -> Self {
        self.placeholders.insert(name.to_string(), value.into());
        self
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input: u64,
    pub output: u64,
    /// Counted as ceil(chars / 4) because the backend reported none.
    pub estimated: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    /// Completions in sample order; failed samples are absent.
    pub texts: Vec<String>,
    /// Sample index of each entry in `texts`.
    pub sample_indices: Vec<usize>,
    pub usage: Vec<Usage>,
    pub failures: Vec<String>,
}

/// One completion request as seen by a backend.
#[derive(Debug, Clone)]
pub struct ChatCall<'a> {
    pub template: &'a str,
    pub placeholders: &'a BTreeMap<String, String>,
    pub prompt: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<(u64, u64)>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, call: &ChatCall<'_>) -> Result<Completion, BackendError>;
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("no <{0}> block in output")]
    TagMissing(String),
    #[error("malformed model output: {0}")]
    OutputMalformed(String),
}

/// Content of the last well-formed `<tag>...</tag>` block, trimmed.
pub fn extract_tagged(text: &str, tag: &str) -> Result<String, LlmError> {
    assert!(!tag.is_empty(), "tag name must be non-empty");
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let mut search_end = text.len();
    while let Some(open_at) = text[..search_end].rfind(&open) {
        let body_start = open_at + open.len();
        if let Some(len) = text[body_start..].find(&close) {
            return Ok(text[body_start..body_start + len].trim().to_string());
        }
        search_end = open_at;
    }
    Err(LlmError::TagMissing(tag.to_string()))
}

pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub stage: Stage,
    pub template: String,
    /// First 16 hex digits of the prompt's SHA-256.
    pub prompt_digest: String,
    pub sample_index: usize,
    pub ok: bool,
    pub attempts: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub estimated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl StageTotals {
    fn add(&mut self, r: &CallRecord) {
        self.calls += 1;
        self.input_tokens += r.input_tokens;
        self.output_tokens += r.output_tokens;
    }
}

/// Per-question record of every backend call.
#[derive(Debug, Default)]
pub struct TokenLedger {
    records: Mutex<Vec<CallRecord>>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, r: CallRecord) {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(r);
    }

    /// Records in a canonical order independent of thread scheduling.
    pub fn records(&self) -> Vec<CallRecord> {
        let mut out = self.records.lock().unwrap_or_else(|e| e.into_inner()).clone();
        out.sort_by(|a, b| {
            (a.stage, &a.template, &a.prompt_digest, a.sample_index).cmp(&(b.stage, &b.template, &b.prompt_digest, b.sample_index))
        });
        out
    }

    pub fn stage_totals(&self) -> BTreeMap<Stage, StageTotals> {
        let mut out: BTreeMap<Stage, StageTotals> = Stage::ALL.iter().map(|s| (*s, StageTotals::default())).collect();
        for r in self.records.lock().unwrap_or_else(|e| e.into_inner()).iter() {
            out.entry(r.stage).or_default().add(r);
        }
        out
    }

    pub fn total(&self) -> StageTotals {
        let mut t = StageTotals::default();
        for r in self.records.lock().unwrap_or_else(|e| e.into_inner()).iter() {
            t.add(r);
        }
        t
    }

    /// Moves every record of `other` into this ledger.
    pub fn absorb(&self, other: TokenLedger) {
        let moved = other.records.into_inner().unwrap_or_else(|e| e.into_inner());
        self.records.lock().unwrap_or_else(|e| e.into_inner()).extend(moved);
    }

    pub fn call_count(&self) -> usize {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub retries: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig { retries: 3, backoff: Duration::from_millis(250), max_in_flight: 16 }
    }
}

/// Shared front door to a chat backend.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    templates: TemplateSet,
    config: GatewayConfig,
    in_flight: Semaphore,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, templates: TemplateSet, config: GatewayConfig) -> Self {
        let in_flight = Semaphore::new(config.max_in_flight);
        Gateway { backend, templates, config, in_flight }
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    pub fn render(&self, req: &LlmRequest) -> Result<String, TemplateError> {
        self.templates.render(&req.template, &req.placeholders)
    }

    /// Runs `req.samples` independent completions and records each in `ledger`.
    pub fn complete(&self, req: &LlmRequest, stage: Stage, ledger: &TokenLedger) -> Result<LlmResponse, LlmError> {
        assert!(req.samples >= 1, "samples must be at least 1");
        let prompt = self.render(req)?;
        let digest = hex_prefix(&Sha256::digest(prompt.as_bytes()));
        let results: Vec<(Result<(String, Usage), String>, u32)> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..req.samples)
                .map(|i| {
                    let prompt = &prompt;
                    s.spawn(move || self.one_sample(req, prompt, i))
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| (Err("sample panicked".into()), 0))).collect()
        });
        let mut resp = LlmResponse::default();
        for (i, (res, attempts)) in results.into_iter().enumerate() {
            let mut rec = CallRecord {
                stage,
                template: req.template.clone(),
                prompt_digest: digest.clone(),
                sample_index: i,
                ok: false,
                attempts,
                input_tokens: 0,
                output_tokens: 0,
                estimated: false,
            };
            match res {
                Ok((text, usage)) => {
                    rec.ok = true;
                    rec.input_tokens = usage.input;
                    rec.output_tokens = usage.output;
                    rec.estimated = usage.estimated;
                    resp.texts.push(text);
                    resp.sample_indices.push(i);
                    resp.usage.push(usage);
                }
                Err(msg) => resp.failures.push(msg),
            }
            ledger.record(rec);
        }
        if resp.texts.is_empty() {
            return Err(LlmError::BackendUnavailable(resp.failures.first().cloned().unwrap_or_default()));
        }
        for f in &resp.failures {
            log::warn!("{} sample failed: {f}", req.template);
        }
        Ok(resp)
    }

    fn one_sample(&self, req: &LlmRequest, prompt: &str, sample_index: usize) -> (Result<(String, Usage), String>, u32) {
        let call = ChatCall {
            template: &req.template,
            placeholders: &req.placeholders,
            prompt,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            sample_index,
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = {
                let _permit = self.in_flight.acquire();
                self.backend.complete(&call)
            };
            match outcome {
                Ok(c) => {
                    let usage = match c.usage {
                        Some((input, output)) => Usage { input, output, estimated: false },
                        None => Usage { input: estimate_tokens(prompt), output: estimate_tokens(&c.text), estimated: true },
                    };
                    return (Ok((c.text, usage)), attempts);
                }
                Err(BackendError::Fatal(m)) => return (Err(m), attempts),
                Err(BackendError::Transient(m)) => {
                    if attempts > self.config.retries {
                        return (Err(m), attempts);
                    }
                    let wait = self.config.backoff.saturating_mul(1 << (attempts - 1).min(16));
                    if !wait.is_zero() {
                        std::thread::sleep(wait);
                    }
                }
            }
        }
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        fail_first: u32,
        calls: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn complete(&self, call: &ChatCall<'_>) -> Result<Completion, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                return Err(BackendError::Transient("down".into()));
            }
            Ok(Completion { text: format!("<result>{}</result>", call.sample_index), usage: None })
        }
    }

    fn gateway(backend: Arc<dyn ChatBackend>, retries: u32) -> Gateway {
        Gateway::new(
            backend,
            TemplateSet::builtin(),
            GatewayConfig { retries, backoff: Duration::ZERO, max_in_flight: 4 },
        )
    }

    fn kw_request(samples: usize) -> LlmRequest {
        LlmRequest::new(templates::KEYWORD_EXTRACTION).with("QUESTION", "q").with("HINT", "").samples(samples)
    }

    #[test]
    fn extract_last_block() {
        assert_eq!(extract_tagged("<reasoning>r</reasoning><result>SELECT 1</result>", "result").unwrap(), "SELECT 1");
        assert_eq!(extract_tagged("<result>a</result> then <result> b </result>", "result").unwrap(), "b");
        assert!(matches!(extract_tagged("no tags", "result"), Err(LlmError::TagMissing(_))));
        assert_eq!(extract_tagged("<result>x</result> trailing </result>", "result").unwrap(), "x");
    }

    #[test]
    fn samples_and_estimated_usage() {
        let gw = gateway(Arc::new(Flaky { fail_first: 0, calls: AtomicU32::new(0) }), 0);
        let ledger = TokenLedger::new();
        let resp = gw.complete(&kw_request(8), Stage::ValueRetrieval, &ledger).unwrap();
        assert_eq!(resp.texts.len(), 8);
        assert_eq!(resp.texts[3], "<result>3</result>");
        assert!(resp.usage.iter().all(|u| u.estimated && u.input > 0));
        assert_eq!(ledger.call_count(), 8);
        let totals = ledger.stage_totals();
        assert_eq!(totals[&Stage::ValueRetrieval].calls, 8);
        let sum_in: u64 = totals.values().map(|t| t.input_tokens).sum();
        assert_eq!(sum_in, ledger.total().input_tokens);
    }

    #[test]
    fn retry_then_succeed() {
        let gw = gateway(Arc::new(Flaky { fail_first: 2, calls: AtomicU32::new(0) }), 3);
        let ledger = TokenLedger::new();
        let resp = gw.complete(&kw_request(1), Stage::Generation, &ledger).unwrap();
        assert_eq!(resp.texts.len(), 1);
        assert_eq!(ledger.records()[0].attempts, 3);
    }

    #[test]
    fn retry_exhaustion_is_unavailable() {
        let backend = Arc::new(Flaky { fail_first: u32::MAX, calls: AtomicU32::new(0) });
        let gw = gateway(backend.clone(), 2);
        let ledger = TokenLedger::new();
        let err = gw.complete(&kw_request(1), Stage::Generation, &ledger).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable(_)));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        assert!(!ledger.records()[0].ok);
    }
}

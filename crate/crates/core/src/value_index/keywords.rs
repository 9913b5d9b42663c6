use serde::{Deserialize, Serialize};

use crate::llm::{extract_tagged, templates, Gateway, LlmError, LlmRequest, Stage, TokenLedger};

/// Ordered, duplicate-free key terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeywordSet {
    keywords: Vec<String>,
}

impl KeywordSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a term after trimming whitespace and surrounding quotes; empty and repeated terms are ignored.
    pub fn push(&mut self, term: &str) {
        let t = strip_quotes(term.trim()).trim();
        if !t.is_empty() && !self.keywords.iter().any(|k| k == t) {
            self.keywords.push(t.to_string());
        }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }
}

impl<S: AsRef<str>> FromIterator<S> for KeywordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = KeywordSet::new();
        for t in iter {
            set.push(t.as_ref());
        }
        set
    }
}

fn strip_quotes(s: &str) -> &str {
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// Parses a Python list literal of strings (or bare scalars).
pub fn parse_python_list(text: &str) -> Option<Vec<String>> {
    let t = text.trim();
    if !(t.starts_with('[') && t.ends_with(']')) {
        return None;
    }
    if let Ok(items) = serde_json::from_str::<Vec<serde_json::Value>>(t) {
        return Some(
            items
                .into_iter()
                .map(|v| match v {
                    serde_json::Value::String(s) => s,
                    other => other.to_string(),
                })
                .collect(),
        );
    }
    let inner: Vec<char> = t[1..t.len() - 1].chars().collect();
    let mut items = Vec::new();
    let mut i = 0;
    while i < inner.len() {
        let c = inner[i];
        if c.is_whitespace() || c == ',' {
            i += 1;
            continue;
        }
        if c == '"' || c == '\'' {
            let mut s = String::new();
            i += 1;
            let mut closed = false;
            while i < inner.len() {
                let d = inner[i];
                if d == '\\' && i + 1 < inner.len() {
                    s.push(inner[i + 1]);
                    i += 2;
                    continue;
                }
                if d == c {
                    closed = true;
                    i += 1;
                    break;
                }
                s.push(d);
                i += 1;
            }
            if !closed {
                return None;
            }
            items.push(s);
        } else {
            let start = i;
            while i < inner.len() && inner[i] != ',' {
                i += 1;
            }
            let bare: String = inner[start..i].iter().collect();
            items.push(bare.trim().to_string());
        }
    }
    Some(items)
}

/// Samples the keyword prompt `samples` times and unions every parseable list.
pub fn extract_keywords(
    question: &str,
    hint: &str,
    gateway: &Gateway,
    ledger: &TokenLedger,
    samples: usize,
    temperature: f64,
) -> Result<KeywordSet, LlmError> {
    assert!(!question.trim().is_empty(), "question must be non-empty");
    let req = LlmRequest::new(templates::KEYWORD_EXTRACTION)
        .with("QUESTION", question)
        .with("HINT", hint)
        .samples(samples)
        .temperature(temperature);
    let resp = gateway.complete(&req, Stage::ValueRetrieval, ledger)?;
    let mut set = KeywordSet::new();
    let mut parsed_any = false;
    for text in &resp.texts {
        let Some(items) = extract_tagged(text, "result").ok().and_then(|p| parse_python_list(&p)) else {
            log::warn!("keyword sample without a parseable list");
            continue;
        };
        parsed_any = true;
        for item in items {
            set.push(&item);
        }
    }
    if !parsed_any {
        return Err(LlmError::OutputMalformed("no keyword sample contained a list inside <result>".into()));
    }
    Ok(set)
}

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

pub const KEYWORD_EXTRACTION: &str = "keyword_extraction";
pub const DIRECT_LINKING: &str = "direct_linking";
pub const DIVIDE_CONQUER: &str = "divide_conquer";
pub const ICL: &str = "icl";
pub const SKELETON: &str = "skeleton";
pub const EXECUTION_REVISION: &str = "execution_revision";
pub const RULE_REVISION: &str = "rule_revision";
pub const ADJUDICATION: &str = "adjudication";

const BUILTIN: &[(&str, &str)] = &[
    (KEYWORD_EXTRACTION, include_str!("../../templates/keyword_extraction.txt")),
    (DIRECT_LINKING, include_str!("../../templates/direct_linking.txt")),
    (DIVIDE_CONQUER, include_str!("../../templates/divide_conquer.txt")),
    (ICL, include_str!("../../templates/icl.txt")),
    (SKELETON, include_str!("../../templates/skeleton.txt")),
    (EXECUTION_REVISION, include_str!("../../templates/execution_revision.txt")),
    (RULE_REVISION, include_str!("../../templates/rule_revision.txt")),
    (ADJUDICATION, include_str!("../../templates/adjudication.txt")),
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("template `{template}` needs placeholder {{{name}}}")]
    Missing { template: String, name: String },
    #[error("reading template directory: {0}")]
    Io(String),
}

/// Prompt templates keyed by id.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        TemplateSet { templates: BUILTIN.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() }
    }

    /// Builtins overridden by any `<id>.txt` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::Io(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| TemplateError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io(format!("{}: {e}", path.display())))?;
            set.templates.insert(id.to_string(), text);
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self, id: &str) -> Result<Vec<String>, TemplateError> {
        let text = self.get(id).ok_or_else(|| TemplateError::Unknown(id.to_string()))?;
        let mut out: Vec<String> = Vec::new();
        for (_, _, name) in scan(text) {
            if !out.iter().any(|n| n == name) {
                out.push(name.to_string());
            }
        }
        Ok(out)
    }

    /// Single-pass `{NAME}` substitution; inserted values are never rescanned.
    pub fn render(&self, id: &str, values: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let text = self.get(id).ok_or_else(|| TemplateError::Unknown(id.to_string()))?;
        let mut out = String::with_capacity(text.len() + values.values().map(String::len).sum::<usize>());
        let mut last = 0;
        for (start, end, name) in scan(text) {
            let value = values
                .get(name)
                .ok_or_else(|| TemplateError::Missing { template: id.to_string(), name: name.to_string() })?;
            out.push_str(&text[last..start]);
            out.push_str(value);
            last = end;
        }
        out.push_str(&text[last..]);
        Ok(out)
    }
}

/// `(start, end, name)` of each `{NAME}` with NAME in `[A-Z][A-Z0-9_]*`.
fn scan(text: &str) -> Vec<(usize, usize, &str)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let mut j = i + 1;
            while j < bytes.len() && (bytes[j].is_ascii_uppercase() || bytes[j].is_ascii_digit() || bytes[j] == b'_') {
                j += 1;
            }
            if j > i + 1 && j < bytes.len() && bytes[j] == b'}' && bytes[i + 1].is_ascii_uppercase() {
                out.push((i, j + 1, &text[i + 1..j]));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    out
}

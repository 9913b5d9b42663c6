//! Robust schema linking: three linkers, union, and foreign-key closure.

mod closure;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use closure::enforce_closure;

use crate::catalog::SchemaCatalog;
use crate::generation::{
    full_subset, generate, render_schema_context, retrieve_fewshot, FewShotStore, GenerationError, GenerationInputs,
    GeneratorKind, MaskVocabulary, SamplingConfig,
};
use crate::llm::{extract_tagged, templates, Gateway, LlmError, LlmRequest, Stage, StageTotals, TokenLedger};
use crate::sql_ast::{extract_schema_refs, parse_sql, SchemaSubset};
use crate::value_index::RetrievedValuesMap;

pub const DEFAULT_THETA_VAL: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Direct,
    Reversed,
    Value,
    Closure,
}

/// Provenance key of a table (`t`) or column (`t.c`).
pub fn element_key(table: &str, column: Option<&str>) -> String {
    match column {
        Some(c) => format!("{table}.{c}"),
        None => table.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkedSchema {
    pub subset: SchemaSubset,
    pub added_by: BTreeMap<String, BTreeSet<Provenance>>,
    pub connected: bool,
    /// Connected components of the linked tables, in the FK graph restricted to them.
    pub components: Vec<Vec<String>>,
}

impl LinkedSchema {
    pub fn provenance(&self, table: &str, column: Option<&str>) -> Option<&BTreeSet<Provenance>> {
        self.added_by.get(&element_key(table, column))
    }
}

#[derive(Debug, Error)]
pub enum LinkError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("every schema linker failed or returned nothing: {0}")]
    AllLinkersFailed(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyOutput {
    pub subset: SchemaSubset,
    pub warnings: Vec<String>,
}

fn table_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?s)<table\s+table_name\s*=\s*"([^"]*)"\s*(/>|>(.*?)</table>)"#).unwrap()
    })
}

fn column_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"<column\s+column_name\s*=\s*"([^"]*)"\s*/?>"#).unwrap())
}

/// Parses the table/column listing inside `<result>`; `None` when there is no result block.
pub fn parse_link_xml(text: &str) -> Option<SchemaSubset> {
    let body = extract_tagged(text, "result").ok()?;
    let mut subset = SchemaSubset::new();
    for t in table_re().captures_iter(&body) {
        let table = t[1].trim();
        if table.is_empty() {
            continue;
        }
        subset.insert_table(table);
        if let Some(cols) = t.get(3) {
            for c in column_re().captures_iter(cols.as_str()) {
                let col = c[1].trim();
                if !col.is_empty() {
                    subset.insert_column(table, col);
                }
            }
        }
    }
    Some(subset)
}

/// Shared inputs of the linkers.
#[derive(Debug, Clone, Copy)]
pub struct LinkInputs<'a> {
    pub question: &'a str,
    pub hint: &'a str,
    pub catalog: &'a SchemaCatalog,
    pub values: &'a RetrievedValuesMap,
}

/// Asks the model for the needed tables and columns and unions every parseable sample.
pub fn direct_link(
    inputs: &LinkInputs<'_>,
    gateway: &Gateway,
    ledger: &TokenLedger,
    sampling: SamplingConfig,
) -> Result<StrategyOutput, LinkError> {
    let context = render_schema_context(&full_subset(inputs.catalog), inputs.catalog, inputs.values);
    let req = LlmRequest::new(templates::DIRECT_LINKING)
        .with("DATABASE_SCHEMA", context.text)
        .with("QUESTION", inputs.question)
        .with("HINT", inputs.hint)
        .samples(sampling.budget)
        .temperature(sampling.temperature);
    let resp = gateway.complete(&req, Stage::SchemaLinking, ledger)?;
    let mut out = StrategyOutput::default();
    let mut parsed = 0;
    for text in &resp.texts {
        if let Some(s) = parse_link_xml(text) {
            parsed += 1;
            out.subset.union_with(&s);
        }
    }
    if parsed == 0 {
        return Err(LlmError::OutputMalformed("no direct-linking sample contained a <result> listing".into()).into());
    }
    for name in out.subset.retain_in_catalog(inputs.catalog) {
        out.warnings.push(format!("direct linking named unknown element {name}"));
    }
    Ok(out)
}

/// Extracts the schema used by ICL draft queries written against the full catalog.
pub fn reversed_link(
    inputs: &LinkInputs<'_>,
    store: &FewShotStore,
    fewshot_n: usize,
    gateway: &Gateway,
    ledger: &TokenLedger,
    sampling: SamplingConfig,
) -> Result<StrategyOutput, LinkError> {
    let full = full_subset(inputs.catalog);
    let context = render_schema_context(&full, inputs.catalog, inputs.values);
    let mut vocab = MaskVocabulary::from_catalog(inputs.catalog);
    for list in inputs.values.entries.values() {
        for v in list {
            vocab.add_value(&v.value);
        }
    }
    let examples = retrieve_fewshot(inputs.question, &vocab, store, fewshot_n);
    let gen_inputs = GenerationInputs { question: inputs.question, hint: inputs.hint, context: &context, examples: &examples };
    let mut out = StrategyOutput::default();
    let drafts = match generate(GeneratorKind::Icl, &gen_inputs, gateway, ledger, sampling, Stage::SchemaLinking) {
        Ok(d) => d,
        Err(GenerationError::NoSql { .. }) => {
            out.warnings.push("reversed linking: no draft contained SQL".into());
            return Ok(out);
        }
        Err(e) => return Err(e.into()),
    };
    let mut parsed = 0;
    for d in &drafts {
        match parse_sql(&d.sql) {
            Ok(tree) => {
                parsed += 1;
                out.subset.union_with(&extract_schema_refs(&tree, inputs.catalog).subset);
            }
            Err(e) => log::debug!("draft {} unparseable: {e}", d.sample_index),
        }
    }
    if parsed == 0 {
        out.warnings.push("reversed linking: every draft was unparseable".into());
    }
    Ok(out)
}

/// Columns with some retrieved value scoring strictly above `theta`.
pub fn value_link(values: &RetrievedValuesMap, catalog: &SchemaCatalog, theta: f64) -> SchemaSubset {
    assert!(theta > 0.0 && theta <= 1.0, "theta_val must be in (0, 1]");
    let mut subset = SchemaSubset::new();
    for ((table, column), list) in &values.entries {
        if list.iter().any(|v| v.score > theta) {
            match catalog.resolve_column(table, column) {
                Some((t, c)) => subset.insert_column(&t, &c),
                None => subset.insert_column(table, column),
            }
        }
    }
    subset
}

/// Union of the strategy outputs, remembering which strategies produced each element.
pub fn union_schemas(parts: &[(Provenance, &SchemaSubset)]) -> (SchemaSubset, BTreeMap<String, BTreeSet<Provenance>>) {
    let mut subset = SchemaSubset::new();
    let mut added_by: BTreeMap<String, BTreeSet<Provenance>> = BTreeMap::new();
    for (p, s) in parts {
        subset.union_with(s);
        for t in &s.tables {
            added_by.entry(element_key(t, None)).or_default().insert(*p);
        }
        for (t, c) in &s.columns {
            added_by.entry(element_key(t, Some(c))).or_default().insert(*p);
        }
    }
    (subset, added_by)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Provenance,
    pub ok: bool,
    pub error: Option<String>,
    pub subset: SchemaSubset,
    pub tokens: StageTotals,
    #[serde(skip)]
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkOutcome {
    pub linked: LinkedSchema,
    pub strategies: Vec<StrategyReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub theta_val: f64,
    pub sampling: SamplingConfig,
    pub fewshot_n: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { theta_val: DEFAULT_THETA_VAL, sampling: SamplingConfig::default(), fewshot_n: crate::generation::DEFAULT_FEWSHOT }
    }
}

fn timed<T>(f: impl FnOnce(&TokenLedger) -> Result<T, LinkError>) -> (Result<T, LinkError>, TokenLedger, Duration) {
    let ledger = TokenLedger::new();
    let start = Instant::now();
    let r = f(&ledger);
    (r, ledger, start.elapsed())
}

/// Runs the three linkers concurrently, then unions and closes their outputs.
pub fn robust_link(
    inputs: &LinkInputs<'_>,
    store: &FewShotStore,
    gateway: &Gateway,
    ledger: &TokenLedger,
    config: LinkConfig,
) -> Result<LinkOutcome, LinkError> {
    let (direct, reversed, value) = std::thread::scope(|s| {
        let d = s.spawn(|| timed(|l| direct_link(inputs, gateway, l, config.sampling)));
        let r = s.spawn(|| timed(|l| reversed_link(inputs, store, config.fewshot_n, gateway, l, config.sampling)));
        let v = timed(|_| Ok(StrategyOutput { subset: value_link(inputs.values, inputs.catalog, config.theta_val), warnings: vec![] }));
        let join = |h: std::thread::ScopedJoinHandle<'_, _>| {
            h.join().unwrap_or_else(|_| {
                (Err(LinkError::AllLinkersFailed("linker thread panicked".into())), TokenLedger::new(), Duration::ZERO)
            })
        };
        (join(d), join(r), v)
    });
    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for (strategy, (result, child, elapsed)) in
        [(Provenance::Direct, direct), (Provenance::Reversed, reversed), (Provenance::Value, value)]
    {
        let tokens = child.total();
        ledger.absorb(child);
        let report = match result {
            Ok(out) => {
                warnings.extend(out.warnings);
                StrategyReport { strategy, ok: true, error: None, subset: out.subset, tokens, elapsed }
            }
            Err(e) => {
                let msg = e.to_string();
                warnings.push(format!("{strategy:?} linking failed: {msg}"));
                errors.push(msg.clone());
                StrategyReport { strategy, ok: false, error: Some(msg), subset: SchemaSubset::new(), tokens, elapsed }
            }
        };
        reports.push(report);
    }
    let parts: Vec<(Provenance, &SchemaSubset)> = reports.iter().map(|r| (r.strategy, &r.subset)).collect();
    let (union, provenance) = union_schemas(&parts);
    if union.is_empty() {
        let detail = if errors.is_empty() { "all linkers returned empty schemas".to_string() } else { errors.join("; ") };
        return Err(LinkError::AllLinkersFailed(detail));
    }
    let mut linked = enforce_closure(&union, inputs.catalog);
    for (k, p) in provenance {
        linked.added_by.insert(k, p);
    }
    if !linked.connected {
        warnings.push(format!("linked tables are not connected in the catalog: {:?}", linked.components));
    }
    Ok(LinkOutcome { linked, strategies: reports, warnings })
}

#[cfg(test)]
mod tests;

//! N-version SQL generation over a linked schema.

mod context;
mod fewshot;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use context::{display_ident, full_subset, python_list, python_repr, render_schema_context, RenderedSchemaContext};
pub use fewshot::{format_examples, mask_question, retrieve_fewshot, FewShotError, FewShotExample, FewShotStore, MaskVocabulary};

use crate::catalog::SchemaCatalog;
use crate::llm::{extract_tagged, templates, Gateway, LlmError, LlmRequest, Stage, TokenLedger};
use crate::schema_link::LinkedSchema;
use crate::toolchain::CheckerId;
use crate::value_index::RetrievedValuesMap;

pub const DEFAULT_BUDGET: usize = 8;
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_FEWSHOT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Skeleton,
    Icl,
    DivideConquer,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [GeneratorKind::Skeleton, GeneratorKind::Icl, GeneratorKind::DivideConquer];

    pub fn template(self) -> &'static str {
        match self {
            GeneratorKind::Skeleton => templates::SKELETON,
            GeneratorKind::Icl => templates::ICL,
            GeneratorKind::DivideConquer => templates::DIVIDE_CONQUER,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            GeneratorKind::Skeleton => "skeleton",
            GeneratorKind::Icl => "icl",
            GeneratorKind::DivideConquer => "divide_conquer",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub checker: CheckerId,
    pub directive: String,
    pub old_sql: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub sql: String,
    pub generator: GeneratorKind,
    pub sample_index: usize,
    pub revisions: Vec<Revision>,
    pub tokens: (u64, u64),
}

impl SqlCandidate {
    pub fn new(sql: impl Into<String>, generator: GeneratorKind, sample_index: usize) -> Self {
        let sql = sql.into();
        assert!(!sql.trim().is_empty(), "candidate SQL must be non-empty");
        SqlCandidate { sql, generator, sample_index, revisions: Vec::new(), tokens: (0, 0) }
    }

    /// Generation order key used for deterministic tie-breaks.
    pub fn origin(&self) -> (GeneratorKind, usize) {
        (self.generator, self.sample_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SqlExtractError {
    #[error("no <result> block")]
    Missing,
    #[error("empty SQL")]
    Empty,
    #[error("SQL contains XML entities")]
    XmlEntities,
}

fn entity_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"&(?:lt|gt|amp|quot|apos|#[0-9]+|#x[0-9a-fA-F]+);").unwrap())
}

/// SQL payload of the last `<result>` block, trimmed and without trailing semicolons.
pub fn extract_sql(text: &str) -> Result<String, SqlExtractError> {
    let payload = extract_tagged(text, "result").map_err(|_| SqlExtractError::Missing)?;
    let sql = payload.trim_end_matches(|c: char| c == ';' || c.is_whitespace()).trim().to_string();
    if sql.is_empty() {
        return Err(SqlExtractError::Empty);
    }
    if entity_re().is_match(&sql) {
        return Err(SqlExtractError::XmlEntities);
    }
    Ok(sql)
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("{generator} generator: {source}")]
    Llm { generator: GeneratorKind, source: LlmError },
    #[error("{generator} generator: no sample contained extractable SQL")]
    NoSql { generator: GeneratorKind },
    #[error("all generators failed: {0}")]
    AllGeneratorsFailed(String),
}

/// Shared per-question inputs of every generator.
#[derive(Debug, Clone, Copy)]
pub struct GenerationInputs<'a> {
    pub question: &'a str,
    pub hint: &'a str,
    pub context: &'a RenderedSchemaContext,
    pub examples: &'a [FewShotExample],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub budget: usize,
    pub temperature: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { budget: DEFAULT_BUDGET, temperature: DEFAULT_TEMPERATURE }
    }
}

pub fn generator_request(kind: GeneratorKind, inputs: &GenerationInputs<'_>, sampling: SamplingConfig) -> LlmRequest {
    let mut req = LlmRequest::new(kind.template())
        .with("QUESTION", inputs.question)
        .with("HINT", inputs.hint)
        .with("DATABASE_SCHEMA", inputs.context.text.as_str())
        .samples(sampling.budget)
        .temperature(sampling.temperature);
    if kind == GeneratorKind::Icl {
        req = req.with("FEW_SHOT_EXAMPLES", format_examples(inputs.examples));
    }
    req
}

/// One backend call per sample; samples without extractable SQL are dropped.
pub fn generate(
    kind: GeneratorKind,
    inputs: &GenerationInputs<'_>,
    gateway: &Gateway,
    ledger: &TokenLedger,
    sampling: SamplingConfig,
    stage: Stage,
) -> Result<Vec<SqlCandidate>, GenerationError> {
    assert!(sampling.budget >= 1, "budget must be at least 1");
    if kind == GeneratorKind::Icl && inputs.examples.is_empty() {
        log::info!("icl generator running zero-shot");
    }
    let req = generator_request(kind, inputs, sampling);
    let resp = gateway.complete(&req, stage, ledger).map_err(|source| GenerationError::Llm { generator: kind, source })?;
    let mut out = Vec::new();
    for ((text, idx), usage) in resp.texts.iter().zip(&resp.sample_indices).zip(&resp.usage) {
        match extract_sql(text) {
            Ok(sql) => {
                let mut c = SqlCandidate::new(sql, kind, *idx);
                c.tokens = (usage.input, usage.output);
                out.push(c);
            }
            Err(e) => log::warn!("{kind} sample {idx} dropped: {e}"),
        }
    }
    if out.is_empty() {
        return Err(GenerationError::NoSql { generator: kind });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NVersionOutput {
    pub context: RenderedSchemaContext,
    pub examples: Vec<FewShotExample>,
    /// C_initial in (generator, sample) order.
    pub candidates: Vec<SqlCandidate>,
    pub warnings: Vec<String>,
}

/// Few-shot vocabulary for a question: linked names plus every retrieved value.
pub fn question_vocabulary(subset: &crate::sql_ast::SchemaSubset, values: &RetrievedValuesMap) -> MaskVocabulary {
    let mut vocab = MaskVocabulary::from_subset(subset);
    for list in values.entries.values() {
        for v in list {
            vocab.add_value(&v.value);
        }
    }
    vocab
}

/// Runs the three generators concurrently over the linked schema.
#[allow(clippy::too_many_arguments)]
pub fn nversion_generate(
    question: &str,
    hint: &str,
    linked: &LinkedSchema,
    catalog: &SchemaCatalog,
    values: &RetrievedValuesMap,
    store: &FewShotStore,
    fewshot_n: usize,
    gateway: &Gateway,
    ledger: &TokenLedger,
    sampling: SamplingConfig,
    generators: &[GeneratorKind],
) -> Result<NVersionOutput, GenerationError> {
    assert!(!linked.subset.is_empty(), "linked schema must be non-empty");
    let context = render_schema_context(&linked.subset, catalog, values);
    let examples = retrieve_fewshot(question, &question_vocabulary(&linked.subset, values), store, fewshot_n);
    let inputs = GenerationInputs { question, hint, context: &context, examples: &examples };
    let results: Vec<(GeneratorKind, Result<Vec<SqlCandidate>, GenerationError>)> = std::thread::scope(|s| {
        let handles: Vec<_> = generators
            .iter()
            .map(|&kind| {
                let inputs = &inputs;
                (kind, s.spawn(move || generate(kind, inputs, gateway, ledger, sampling, Stage::Generation)))
            })
            .collect();
        handles
            .into_iter()
            .map(|(kind, h)| {
                let r = h.join().unwrap_or(Err(GenerationError::NoSql { generator: kind }));
                (kind, r)
            })
            .collect()
    });
    let mut candidates = Vec::new();
    let mut warnings = Vec::new();
    if inputs.examples.is_empty() && generators.contains(&GeneratorKind::Icl) {
        warnings.push("icl generator ran zero-shot: no few-shot examples".to_string());
    }
    let mut errors = Vec::new();
    for (_, r) in results {
        match r {
            Ok(c) => candidates.extend(c),
            Err(e) => {
                warnings.push(e.to_string());
                errors.push(e.to_string());
            }
        }
    }
    if candidates.is_empty() {
        return Err(GenerationError::AllGeneratorsFailed(errors.join("; ")));
    }
    candidates.sort_by_key(|c| c.origin());
    Ok(NVersionOutput { context, examples, candidates, warnings })
}

#[cfg(test)]
mod tests;

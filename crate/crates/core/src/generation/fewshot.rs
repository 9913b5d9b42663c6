use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SchemaCatalog;
use crate::sql_ast::{parse_sql, walk, Expr, Literal, Node, SchemaSubset, TableFactor};
use crate::value_index::{cosine, TrigramEmbedder};

#[derive(Debug, Error)]
pub enum FewShotError {
    #[error("example store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("example store line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub masked_question: String,
    pub sql: String,
}

#[derive(Debug, Deserialize)]
struct StoreRecord {
    question: String,
    sql: String,
    #[serde(default)]
    masked_question: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MaskKind {
    Table,
    Column,
    Value,
}

impl MaskKind {
    fn token(self) -> &'static str {
        match self {
            MaskKind::Table => "<tab>",
            MaskKind::Column => "<col>",
            MaskKind::Value => "<val>",
        }
    }
}

/// Names that masking replaces with `<tab>`, `<col>` and `<val>`.
#[derive(Debug, Clone, Default)]
pub struct MaskVocabulary {
    phrases: BTreeMap<String, MaskKind>,
}

impl MaskVocabulary {
    fn add(&mut self, phrase: &str, kind: MaskKind) {
        let p = phrase.trim().to_lowercase();
        if p.chars().count() < 2 {
            return;
        }
        // first writer wins, so tables shadow same-named columns and columns shadow values
        self.phrases.entry(p.clone()).or_insert(kind);
        if p.contains('_') {
            self.phrases.entry(p.replace('_', " ")).or_insert(kind);
        }
    }

    pub fn add_table(&mut self, name: &str) {
        self.add(name, MaskKind::Table);
    }

    pub fn add_column(&mut self, name: &str) {
        self.add(name, MaskKind::Column);
    }

    pub fn add_value(&mut self, value: &str) {
        self.add(value, MaskKind::Value);
    }

    pub fn from_subset(subset: &SchemaSubset) -> Self {
        let mut v = MaskVocabulary::default();
        for t in &subset.tables {
            v.add_table(t);
        }
        for (_, c) in &subset.columns {
            v.add_column(c);
        }
        v
    }

    pub fn from_catalog(catalog: &SchemaCatalog) -> Self {
        let mut v = MaskVocabulary::default();
        for t in &catalog.tables {
            v.add_table(&t.name);
        }
        for t in &catalog.tables {
            for c in &t.columns {
                v.add_column(&c.name);
            }
        }
        v
    }

    /// Vocabulary implied by an example's SQL: its tables, columns and string literals.
    pub fn from_sql(sql: &str) -> Self {
        let mut v = MaskVocabulary::default();
        let Ok(tree) = parse_sql(sql) else { return v };
        let mut tables = Vec::new();
        let mut columns = Vec::new();
        let mut literals = Vec::new();
        walk(&tree, &mut |visit| match visit.node {
            Node::TableFactor(TableFactor::Table { name, .. }) => tables.push(name.value.clone()),
            Node::Expr(Expr::Column(c)) => columns.push(c.name.value.clone()),
            Node::Expr(Expr::Literal(Literal::String(s))) => literals.push(s.clone()),
            _ => {}
        });
        for t in tables {
            v.add_table(&t);
        }
        for c in columns {
            v.add_column(&c);
        }
        for l in literals {
            v.add_value(&l);
        }
        v
    }

    /// Quoted literals and numbers first, then phrases longest first.
    fn regex(&self) -> Regex {
        let mut phrases: Vec<&String> = self.phrases.keys().collect();
        phrases.sort_by(|a, b| b.chars().count().cmp(&a.chars().count()).then_with(|| a.cmp(b)));
        let mut alts = vec![r#"'[^']*'"#.to_string(), r#""[^"]*""#.to_string()];
        alts.extend(phrases.iter().map(|p| format!(r"\b{}(?:e?s)?\b", regex::escape(p))));
        alts.push(r"\b\d+(?:\.\d+)?\b".to_string());
        Regex::new(&format!("(?i){}", alts.join("|"))).expect("escaped alternation is a valid regex")
    }
}

/// Replaces quoted literals, numbers and vocabulary phrases with their mask tokens in one pass.
pub fn mask_question(question: &str, vocab: &MaskVocabulary) -> String {
    vocab
        .regex()
        .replace_all(question, |caps: &regex::Captures<'_>| {
            let m = caps[0].to_lowercase();
            let kind = vocab
                .phrases
                .get(&m)
                .or_else(|| m.strip_suffix('s').and_then(|b| vocab.phrases.get(b)))
                .or_else(|| m.strip_suffix("es").and_then(|b| vocab.phrases.get(b)));
            kind.map(|k| k.token()).unwrap_or("<val>").to_string()
        })
        .into_owned()
}

/// Question/SQL corpus searched for in-context examples.
#[derive(Debug, Clone, Default)]
pub struct FewShotStore {
    examples: Vec<FewShotExample>,
    vectors: Vec<Vec<f32>>,
    embedder: TrigramEmbedder,
}

impl FewShotStore {
    pub fn new(examples: Vec<FewShotExample>) -> Self {
        let embedder = TrigramEmbedder::default();
        let vectors = examples.iter().map(|e| embedder.embed_one(&e.masked_question)).collect();
        FewShotStore { examples, vectors, embedder }
    }

    /// Builds examples from `(question, sql)` pairs, masking each with its own SQL.
    pub fn from_pairs<I, Q, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (Q, S)>,
        Q: Into<String>,
        S: Into<String>,
    {
        let examples = pairs
            .into_iter()
            .map(|(q, s)| {
                let (question, sql) = (q.into(), s.into());
                let masked_question = mask_question(&question, &MaskVocabulary::from_sql(&sql));
                FewShotExample { question, masked_question, sql }
            })
            .collect();
        Self::new(examples)
    }

    /// JSON lines with `question` and `sql` (optionally a precomputed `masked_question`).
    pub fn from_jsonl(text: &str) -> Result<Self, FewShotError> {
        let mut examples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: StoreRecord =
                serde_json::from_str(line).map_err(|e| FewShotError::Format { line: i + 1, message: e.to_string() })?;
            let masked_question = rec
                .masked_question
                .unwrap_or_else(|| mask_question(&rec.question, &MaskVocabulary::from_sql(&rec.sql)));
            examples.push(FewShotExample { question: rec.question, masked_question, sql: rec.sql });
        }
        Ok(Self::new(examples))
    }

    pub fn load(path: &Path) -> Result<Self, FewShotError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    /// Top-`n` examples by cosine between masked questions; ties keep corpus order.
    pub fn retrieve(&self, masked_target: &str, n: usize) -> Vec<FewShotExample> {
        if n == 0 || self.examples.is_empty() {
            return Vec::new();
        }
        let q = self.embedder.embed_one(masked_target);
        let mut scored: Vec<(usize, f64)> = self.vectors.iter().enumerate().map(|(i, v)| (i, cosine(v, &q))).collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.into_iter().take(n).map(|(i, _)| self.examples[i].clone()).collect()
    }
}

/// Masks the target question with `vocab` and retrieves the nearest stored examples.
pub fn retrieve_fewshot(question: &str, vocab: &MaskVocabulary, store: &FewShotStore, n: usize) -> Vec<FewShotExample> {
    store.retrieve(&mask_question(question, vocab), n)
}

/// Text for `{FEW_SHOT_EXAMPLES}`.
pub fn format_examples(examples: &[FewShotExample]) -> String {
    if examples.is_empty() {
        return "No examples available.".to_string();
    }
    let mut out = Vec::new();
    for (i, e) in examples.iter().enumerate() {
        out.push(format!("### Example {}\nQuestion: {}\nSQL: {}", i + 1, e.question, e.sql));
    }
    out.join("\n\n")
}

//! Offline value indexing of TEXT columns and online top-K value retrieval.

mod embed;
mod keywords;
mod shard;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use rusqlite::types::ValueRef;
use rusqlite::Connection;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{l2_normalize, Embedder, EmbeddingError, RemoteEmbedder, RemoteEmbedderConfig, TrigramEmbedder};
pub use keywords::{extract_keywords, parse_python_list, KeywordSet};
pub use shard::{cosine, nearest_values, rank_order, DimensionMismatch, ShardError, ValueIndexShard};

use crate::catalog::{quote_sql_ident, DatabaseHandle, SchemaCatalog};
use crate::sync::{default_workers, parallel_map};

pub const DEFAULT_TOP_K: usize = 5;
pub const MAX_INDEXED_DISTINCT: u64 = 500_000;
const HEURISTIC_SAMPLE: u64 = 1000;
const HEURISTIC_SHARE: f64 = 0.95;
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("database error: {0}")]
    Database(#[from] rusqlite::Error),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Shard(#[from] ShardError),
    #[error("index I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("index manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    NonText,
    IdLike,
    UuidLike,
    NumericText,
    TooManyDistinct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnProfile {
    pub table: String,
    pub column: String,
    /// Non-null values.
    pub row_count: u64,
    pub distinct_count: u64,
    pub indexable: bool,
    pub skip_reason: Option<SkipReason>,
}

fn id_name_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(^|_)(id|uuid|guid|hash|code)$").unwrap())
}

fn uuid_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-[0-9a-fA-F]{12}$").unwrap()
    })
}

pub fn is_uuid(s: &str) -> bool {
    uuid_re().is_match(s.trim())
}

pub fn is_numeric_text(s: &str) -> bool {
    let t = s.trim();
    !t.is_empty() && t.parse::<f64>().is_ok_and(|x| x.is_finite())
}

fn share(sample: &[String], pred: fn(&str) -> bool) -> f64 {
    if sample.is_empty() {
        return 0.0;
    }
    sample.iter().filter(|s| pred(s)).count() as f64 / sample.len() as f64
}

/// Text form of a stored cell; blobs and NULLs have none.
fn cell_text(v: ValueRef<'_>) -> Option<String> {
    match v {
        ValueRef::Text(t) => Some(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Integer(i) => Some(i.to_string()),
        ValueRef::Real(r) => Some(r.to_string()),
        ValueRef::Null | ValueRef::Blob(_) => None,
    }
}

fn profile_column(conn: &Connection, table: &str, column: &str, is_text: bool) -> Result<ColumnProfile, rusqlite::Error> {
    let (t, c) = (quote_sql_ident(table), quote_sql_ident(column));
    let (row_count, distinct_count): (i64, i64) =
        conn.query_row(&format!("SELECT COUNT({c}), COUNT(DISTINCT {c}) FROM {t}"), [], |r| Ok((r.get(0)?, r.get(1)?)))?;
    let mut p = ColumnProfile {
        table: table.to_string(),
        column: column.to_string(),
        row_count: row_count as u64,
        distinct_count: distinct_count as u64,
        indexable: false,
        skip_reason: None,
    };
    let reason = if !is_text {
        Some(SkipReason::NonText)
    } else if id_name_re().is_match(column) && p.distinct_count == p.row_count && p.row_count > 0 {
        Some(SkipReason::IdLike)
    } else {
        let limit = p.distinct_count.min(HEURISTIC_SAMPLE);
        let mut stmt =
            conn.prepare(&format!("SELECT DISTINCT {c} FROM {t} WHERE {c} IS NOT NULL ORDER BY {c} LIMIT {limit}"))?;
        let sample: Vec<String> = stmt
            .query_map([], |r| Ok(cell_text(r.get_ref(0)?)))?
            .filter_map(|r| r.transpose())
            .collect::<Result<_, _>>()?;
        if share(&sample, is_uuid) >= HEURISTIC_SHARE {
            Some(SkipReason::UuidLike)
        } else if share(&sample, is_numeric_text) >= HEURISTIC_SHARE {
            Some(SkipReason::NumericText)
        } else if p.distinct_count > MAX_INDEXED_DISTINCT {
            Some(SkipReason::TooManyDistinct)
        } else {
            None
        }
    };
    p.indexable = reason.is_none();
    p.skip_reason = reason;
    Ok(p)
}

/// Profiles every catalog column, in catalog order.
pub fn profile_columns(db: &DatabaseHandle, catalog: &SchemaCatalog) -> Result<Vec<ColumnProfile>, IndexError> {
    let conn = db.open_read_only()?;
    let mut out = Vec::new();
    for table in &catalog.tables {
        for col in &table.columns {
            out.push(profile_column(&conn, &table.name, &col.name, col.is_text())?);
        }
    }
    Ok(out)
}

fn distinct_values(conn: &Connection, table: &str, column: &str) -> Result<Vec<String>, rusqlite::Error> {
    let (t, c) = (quote_sql_ident(table), quote_sql_ident(column));
    let mut stmt = conn.prepare(&format!("SELECT DISTINCT {c} FROM {t} WHERE {c} IS NOT NULL"))?;
    let mut values: Vec<String> =
        stmt.query_map([], |r| Ok(cell_text(r.get_ref(0)?)))?.filter_map(|r| r.transpose()).collect::<Result<_, _>>()?;
    values.sort();
    values.dedup();
    Ok(values)
}

fn build_shard(db: &DatabaseHandle, p: &ColumnProfile, embedder: &dyn Embedder) -> Result<ValueIndexShard, IndexError> {
    let conn = db.open_read_only()?;
    let values = distinct_values(&conn, &p.table, &p.column)?;
    let mut entries = Vec::with_capacity(values.len());
    for chunk in values.chunks(256) {
        let vectors = embedder.embed(chunk)?;
        if vectors.len() != chunk.len() || vectors.iter().any(|v| v.len() != embedder.dimension()) {
            return Err(EmbeddingError::BadResponse("vector count or dimension mismatch".into()).into());
        }
        entries.extend(chunk.iter().cloned().zip(vectors));
    }
    Ok(ValueIndexShard::new(&p.table, &p.column, embedder.dimension(), entries))
}

/// All shards of one database plus the profiles that selected them.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIndex {
    pub embedder: String,
    pub dimension: usize,
    pub profiles: Vec<ColumnProfile>,
    pub shards: Vec<ValueIndexShard>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    embedder: String,
    dimension: usize,
    profiles: Vec<ColumnProfile>,
    shards: Vec<ManifestShard>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestShard {
    table: String,
    column: String,
    file: String,
    count: usize,
}

impl ValueIndex {
    pub fn empty(embedder: &dyn Embedder) -> Self {
        ValueIndex { embedder: embedder.name(), dimension: embedder.dimension(), profiles: vec![], shards: vec![] }
    }

    /// One shard per indexable profile; shards are built in parallel.
    pub fn build(db: &DatabaseHandle, profiles: Vec<ColumnProfile>, embedder: &dyn Embedder) -> Result<Self, IndexError> {
        let targets: Vec<&ColumnProfile> = profiles.iter().filter(|p| p.indexable).collect();
        let shards = parallel_map(&targets, default_workers(), |p| build_shard(db, p, embedder))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ValueIndex { embedder: embedder.name(), dimension: embedder.dimension(), profiles, shards })
    }

    pub fn shard(&self, table: &str, column: &str) -> Option<&ValueIndexShard> {
        self.shards.iter().find(|s| s.table.eq_ignore_ascii_case(table) && s.column.eq_ignore_ascii_case(column))
    }

    /// Writes `manifest.json` and `shards/NNNN.shard` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        let shard_dir = dir.join("shards");
        fs::create_dir_all(&shard_dir)?;
        let mut listed = Vec::new();
        for (i, shard) in self.shards.iter().enumerate() {
            let file = format!("{i:04}.shard");
            fs::write(shard_dir.join(&file), shard.to_bytes())?;
            listed.push(ManifestShard { table: shard.table.clone(), column: shard.column.clone(), file, count: shard.len() });
        }
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            embedder: self.embedder.clone(),
            dimension: self.dimension,
            profiles: self.profiles.clone(),
            shards: listed,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| IndexError::Manifest(e.to_string()))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| IndexError::Manifest(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(IndexError::Manifest(format!("unsupported manifest version {}", manifest.version)));
        }
        let mut shards = Vec::new();
        for entry in &manifest.shards {
            let bytes = fs::read(dir.join("shards").join(&entry.file))?;
            let shard = ValueIndexShard::read_from(&mut bytes.as_slice())?;
            if shard.dimension() != manifest.dimension || shard.len() != entry.count {
                return Err(IndexError::Manifest(format!("shard {} disagrees with manifest", entry.file)));
            }
            shards.push(shard);
        }
        Ok(ValueIndex { embedder: manifest.embedder, dimension: manifest.dimension, profiles: manifest.profiles, shards })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredValue {
    pub value: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ColumnValues {
    table: String,
    column: String,
    values: Vec<ScoredValue>,
}

/// Per-column ranked values retrieved for one question.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<ColumnValues>", into = "Vec<ColumnValues>")]
pub struct RetrievedValuesMap {
    pub entries: BTreeMap<(String, String), Vec<ScoredValue>>,
}

impl From<Vec<ColumnValues>> for RetrievedValuesMap {
    fn from(v: Vec<ColumnValues>) -> Self {
        RetrievedValuesMap { entries: v.into_iter().map(|c| ((c.table, c.column), c.values)).collect() }
    }
}

impl From<RetrievedValuesMap> for Vec<ColumnValues> {
    fn from(m: RetrievedValuesMap) -> Self {
        m.entries.into_iter().map(|((table, column), values)| ColumnValues { table, column, values }).collect()
    }
}

impl RetrievedValuesMap {
    pub fn get(&self, table: &str, column: &str) -> &[ScoredValue] {
        self.entries
            .iter()
            .find(|((t, c), _)| t.eq_ignore_ascii_case(table) && c.eq_ignore_ascii_case(column))
            .map(|(_, v)| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn insert(&mut self, table: &str, column: &str, values: Vec<ScoredValue>) {
        self.entries.insert((table.to_string(), column.to_string()), values);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Retrieval {
    pub values: RetrievedValuesMap,
    pub warnings: Vec<String>,
}

/// Pools every keyword's top-`k` per column, then keeps the `k` best distinct values.
pub fn pool_top_k(per_keyword: Vec<Vec<(String, f64)>>, k: usize) -> Vec<ScoredValue> {
    let mut pool: Vec<(String, f64)> = per_keyword.into_iter().flatten().collect();
    pool.sort_by(rank_order);
    let mut out: Vec<ScoredValue> = Vec::with_capacity(k);
    for (value, score) in pool {
        if out.len() == k {
            break;
        }
        if !out.iter().any(|s| s.value == value) {
            out.push(ScoredValue { value, score });
        }
    }
    out
}

pub fn retrieve_values(
    index: &ValueIndex,
    keywords: &KeywordSet,
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Retrieval, EmbeddingError> {
    assert!(k >= 1, "k must be positive");
    let queries = if keywords.is_empty() { Vec::new() } else { embedder.embed(keywords.as_slice())? };
    let per_shard = parallel_map(&index.shards, default_workers(), |shard| {
        let mut lists = Vec::with_capacity(queries.len());
        for q in &queries {
            match nearest_values(shard, q, k) {
                Ok(list) => lists.push(list),
                Err(e) => return Err(format!("{}.{}: {e}", shard.table, shard.column)),
            }
        }
        Ok(pool_top_k(lists, k))
    });
    let mut out = Retrieval::default();
    for (shard, result) in index.shards.iter().zip(per_shard) {
        let values = result.unwrap_or_else(|w| {
            log::warn!("value retrieval skipped shard: {w}");
            out.warnings.push(w);
            Vec::new()
        });
        out.values.insert(&shard.table, &shard.column, values);
    }
    Ok(out)
}

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::DatabaseHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Bird,
    Spider,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bird" => Ok(DatasetFormat::Bird),
            "spider" => Ok(DatasetFormat::Spider),
            other => Err(format!("unknown dataset format `{other}` (expected bird or spider)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCase {
    pub question_id: String,
    pub db_id: String,
    pub question: String,
    /// BIRD "evidence"; empty for Spider.
    pub hint: String,
    pub gold_sql: String,
    #[serde(skip)]
    pub db_path: PathBuf,
}

impl BenchCase {
    pub fn database(&self) -> DatabaseHandle {
        DatabaseHandle::new(&self.db_path)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("record {index}: {message}")]
    Format { index: usize, message: String },
}

/// `<db_root>/<db_id>/<db_id>.sqlite`, falling back to `.db`.
pub fn resolve_database(db_root: &Path, db_id: &str) -> Option<PathBuf> {
    ["sqlite", "db"].iter().map(|ext| db_root.join(db_id).join(format!("{db_id}.{ext}"))).find(|p| p.is_file())
}

fn field<'a>(rec: &'a Value, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|n| rec.get(*n).and_then(Value::as_str))
}

pub fn parse_dataset(text: &str, format: DatasetFormat, db_root: &Path) -> Result<Vec<BenchCase>, DatasetError> {
    let records: Vec<Value> = serde_json::from_str(text)
        .map_err(|e| DatasetError::Format { index: 0, message: format!("expected a JSON array of records: {e}") })?;
    let mut cases = Vec::with_capacity(records.len());
    for (index, rec) in records.iter().enumerate() {
        let bad = |message: String| DatasetError::Format { index, message };
        let need = |names: &[&str]| field(rec, names).ok_or_else(|| bad(format!("missing field `{}`", names[0])));
        let db_id = need(&["db_id"])?.to_string();
        let question = need(&["question"])?.to_string();
        let (gold_sql, hint) = match format {
            DatasetFormat::Bird => (need(&["SQL", "sql"])?.to_string(), field(rec, &["evidence"]).unwrap_or("").to_string()),
            DatasetFormat::Spider => (need(&["query", "SQL"])?.to_string(), field(rec, &["evidence"]).unwrap_or("").to_string()),
        };
        let question_id = match rec.get("question_id") {
            Some(Value::Number(n)) => n.to_string(),
            Some(Value::String(s)) => s.clone(),
            _ => index.to_string(),
        };
        let db_path = resolve_database(db_root, &db_id).ok_or_else(|| bad(format!("unknown db_id `{db_id}` under {}", db_root.display())))?;
        cases.push(BenchCase { question_id, db_id, question, hint, gold_sql, db_path });
    }
    Ok(cases)
}

pub fn ingest_dataset(path: &Path, format: DatasetFormat, db_root: &Path) -> Result<Vec<BenchCase>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Read { path: path.to_path_buf(), message: e.to_string() })?;
    parse_dataset(&text, format, db_root)
}

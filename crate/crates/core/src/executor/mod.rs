//! Read-only SQLite execution, result canonicalization and result equivalence.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::DatabaseHandle;
use crate::sync::Semaphore;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const ROW_CAP: usize = 10_000;
pub const DEFAULT_CONNECTIONS: usize = 8;
const MICRO: f64 = 1_000_000.0;
/// Reals whose scaled magnitude exceeds this keep a formatted representation.
const MAX_SCALED: f64 = 1e30;

/// A result cell after normalization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "snake_case")]
pub enum Cell {
    Null,
    Int(i64),
    /// Real rounded to 6 decimal places, in millionths.
    Real(i128),
    /// Real too large for the fixed-point form, as `{:.6e}`.
    Float(String),
    Text(String),
    /// SHA-256 of the blob, hex.
    Blob(String),
}

impl Cell {
    pub fn from_f64(x: f64) -> Cell {
        if !x.is_finite() {
            return Cell::Float(format!("{x}"));
        }
        let scaled = (x * MICRO).round();
        if scaled.abs() >= MAX_SCALED {
            return Cell::Float(format!("{x:.6e}"));
        }
        let micro = scaled as i128;
        if micro % 1_000_000 == 0 {
            let whole = micro / 1_000_000;
            if let Ok(i) = i64::try_from(whole) {
                return Cell::Int(i);
            }
        }
        Cell::Real(micro)
    }

    pub fn from_value(v: ValueRef<'_>) -> Cell {
        match v {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Int(i),
            ValueRef::Real(r) => Cell::from_f64(r),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob(hex(&Sha256::digest(b))),
        }
    }

    /// Re-normalizes an already canonical cell (a no-op by construction).
    pub fn canonicalize(&self) -> Cell {
        match self {
            Cell::Real(m) if m % 1_000_000 == 0 => {
                i64::try_from(m / 1_000_000).map(Cell::Int).unwrap_or_else(|_| self.clone())
            }
            other => other.clone(),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    fn feed(&self, h: &mut Sha256) {
        match self {
            Cell::Null => h.update([0u8]),
            Cell::Int(i) => {
                h.update([1u8]);
                h.update(i.to_le_bytes());
            }
            Cell::Real(m) => {
                h.update([2u8]);
                h.update(m.to_le_bytes());
            }
            Cell::Float(s) | Cell::Text(s) | Cell::Blob(s) => {
                h.update([match self {
                    Cell::Float(_) => 3u8,
                    Cell::Text(_) => 4,
                    _ => 5,
                }]);
                h.update((s.len() as u64).to_le_bytes());
                h.update(s.as_bytes());
            }
        }
    }

    pub fn display(&self) -> String {
        match self {
            Cell::Null => "NULL".into(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(m) => {
                let sign = if *m < 0 { "-" } else { "" };
                let a = m.unsigned_abs();
                let frac = format!("{:06}", a % 1_000_000);
                format!("{sign}{}.{}", a / 1_000_000, frac.trim_end_matches('0'))
            }
            Cell::Float(s) | Cell::Text(s) => s.clone(),
            Cell::Blob(h) => format!("<blob {}>", &h[..h.len().min(12)]),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn row_hash(row: &[Cell]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((row.len() as u64).to_le_bytes());
    for c in row {
        c.feed(&mut h);
    }
    h.finalize().into()
}

/// Order-independent digest: wrapping sum of row hashes, so duplicates count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct BagDigest(u128, u128);

impl BagDigest {
    fn add(&mut self, hash: &[u8; 32]) {
        self.0 = self.0.wrapping_add(u128::from_le_bytes(hash[..16].try_into().unwrap()));
        self.1 = self.1.wrapping_add(u128::from_le_bytes(hash[16..].try_into().unwrap()));
    }

    fn hex(&self) -> String {
        format!("{:032x}{:032x}", self.0, self.1)
    }
}

/// Canonical rows of one result; rows beyond the cap are represented only by digests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalResult {
    pub column_count: usize,
    pub row_count: u64,
    /// At most `ROW_CAP` rows, in engine order.
    pub rows: Vec<Vec<Cell>>,
    pub truncated: bool,
    pub ordered_digest: String,
    pub bag_digest: String,
}

impl CanonicalResult {
    pub fn from_rows(column_count: usize, rows: Vec<Vec<Cell>>) -> Self {
        let mut b = ResultBuilder::new(column_count);
        for r in rows {
            b.push(r);
        }
        b.finish()
    }

    pub fn canonicalize(&self) -> Self {
        let rows = self.rows.iter().map(|r| r.iter().map(Cell::canonicalize).collect()).collect();
        if self.truncated {
            let mut out = self.clone();
            out.rows = rows;
            return out;
        }
        CanonicalResult::from_rows(self.column_count, rows)
    }

    pub fn is_empty(&self) -> bool {
        self.row_count == 0
    }

    /// True when every cell of every row is NULL (and there is at least one row).
    pub fn all_null(&self) -> bool {
        self.row_count > 0 && !self.truncated && self.rows.iter().all(|r| r.iter().all(Cell::is_null))
    }

    /// Stable key: equal keys iff results are equivalent ignoring order under bag semantics.
    pub fn cluster_key(&self) -> String {
        format!("{}:{}:{}", self.column_count, self.row_count, self.bag_digest)
    }
}

struct ResultBuilder {
    column_count: usize,
    rows: Vec<Vec<Cell>>,
    count: u64,
    ordered: Sha256,
    bag: BagDigest,
}

impl ResultBuilder {
    fn new(column_count: usize) -> Self {
        let mut ordered = Sha256::new();
        ordered.update((column_count as u64).to_le_bytes());
        ResultBuilder { column_count, rows: Vec::new(), count: 0, ordered, bag: BagDigest::default() }
    }

    fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.column_count, "row width differs from column count");
        let h = row_hash(&row);
        self.ordered.update(h);
        self.bag.add(&h);
        self.count += 1;
        if self.rows.len() < ROW_CAP {
            self.rows.push(row);
        }
    }

    fn finish(self) -> CanonicalResult {
        CanonicalResult {
            column_count: self.column_count,
            row_count: self.count,
            truncated: self.count as usize > self.rows.len(),
            rows: self.rows,
            ordered_digest: hex(&self.ordered.finalize()),
            bag_digest: self.bag.hex(),
        }
    }
}

/// Row multiplicity handling in comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSemantics {
    #[default]
    Bag,
    Set,
}

fn sorted_rows(rows: &[Vec<Cell>]) -> Vec<&Vec<Cell>> {
    let mut v: Vec<&Vec<Cell>> = rows.iter().collect();
    v.sort();
    v
}

fn first_occurrences(rows: &[Vec<Cell>]) -> Vec<&Vec<Cell>> {
    let mut seen = std::collections::HashSet::new();
    rows.iter().filter(|r| seen.insert(*r)).collect()
}

/// Bag-semantics equivalence.
pub fn results_equivalent(a: &CanonicalResult, b: &CanonicalResult, order_sensitive: bool) -> bool {
    results_equivalent_with(a, b, order_sensitive, RowSemantics::Bag)
}

pub fn results_equivalent_with(a: &CanonicalResult, b: &CanonicalResult, order_sensitive: bool, semantics: RowSemantics) -> bool {
    if a.column_count != b.column_count {
        return false;
    }
    if a.truncated || b.truncated {
        // digests are multiset-exact; set semantics degrades to bag here
        return a.truncated == b.truncated
            && a.row_count == b.row_count
            && if order_sensitive { a.ordered_digest == b.ordered_digest } else { a.bag_digest == b.bag_digest };
    }
    match (semantics, order_sensitive) {
        (RowSemantics::Bag, true) => a.rows == b.rows,
        (RowSemantics::Bag, false) => a.row_count == b.row_count && sorted_rows(&a.rows) == sorted_rows(&b.rows),
        (RowSemantics::Set, true) => first_occurrences(&a.rows) == first_occurrences(&b.rows),
        (RowSemantics::Set, false) => {
            let mut x = sorted_rows(&a.rows);
            let mut y = sorted_rows(&b.rows);
            x.dedup();
            y.dedup();
            x == y
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub result: Option<CanonicalResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ExecutionOutcome {
    fn ok(result: CanonicalResult, elapsed: Duration) -> Self {
        ExecutionOutcome { status: ExecStatus::Ok, result: Some(result), error: None, elapsed }
    }

    fn error(msg: impl Into<String>, elapsed: Duration) -> Self {
        ExecutionOutcome { status: ExecStatus::Error, result: None, error: Some(msg.into()), elapsed }
    }

    fn timeout(elapsed: Duration) -> Self {
        ExecutionOutcome { status: ExecStatus::Timeout, result: None, error: None, elapsed }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    /// Short engine message or status for prompts.
    pub fn describe(&self) -> String {
        match self.status {
            ExecStatus::Ok => {
                let r = self.result.as_ref().expect("ok outcome carries a result");
                format!("{} row(s), {} column(s)", r.row_count, r.column_count)
            }
            ExecStatus::Error => format!("Error: {}", self.error.as_deref().unwrap_or("unknown error")),
            ExecStatus::Timeout => "Error: query timed out".to_string(),
        }
    }
}

fn global_pool() -> &'static Semaphore {
    static POOL: OnceLock<Semaphore> = OnceLock::new();
    POOL.get_or_init(|| Semaphore::new(DEFAULT_CONNECTIONS))
}

/// Executes one statement read-only with a wall-clock timeout.
pub fn execute(sql: &str, db: &DatabaseHandle, timeout: Duration) -> ExecutionOutcome {
    assert!(!timeout.is_zero(), "timeout must be positive");
    let _permit = global_pool().acquire();
    let start = Instant::now();
    let conn = match db.open_read_only() {
        Ok(c) => c,
        Err(e) => return ExecutionOutcome::error(e.to_string(), start.elapsed()),
    };
    execute_on(&conn, sql, timeout, start)
}

fn is_interrupt(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::OperationInterrupted)
}

/// Executes on an existing connection; the connection is switched to query-only mode.
pub fn execute_on(conn: &Connection, sql: &str, timeout: Duration, start: Instant) -> ExecutionOutcome {
    if let Err(e) = conn.pragma_update(None, "query_only", true) {
        return ExecutionOutcome::error(e.to_string(), start.elapsed());
    }
    let deadline = start + timeout;
    conn.progress_handler(1000, Some(move || Instant::now() > deadline));
    let outcome = run(conn, sql, start);
    conn.progress_handler(0, None::<fn() -> bool>);
    outcome
}

fn run(conn: &Connection, sql: &str, start: Instant) -> ExecutionOutcome {
    let mut stmt = match conn.prepare(sql) {
        Ok(s) => s,
        Err(e) if is_interrupt(&e) => return ExecutionOutcome::timeout(start.elapsed()),
        Err(e) => return ExecutionOutcome::error(e.to_string(), start.elapsed()),
    };
    if !stmt.readonly() {
        return ExecutionOutcome::error("attempt to write a readonly database", start.elapsed());
    }
    let n = stmt.column_count();
    let mut builder = ResultBuilder::new(n);
    let mut rows = match stmt.query([]) {
        Ok(r) => r,
        Err(e) if is_interrupt(&e) => return ExecutionOutcome::timeout(start.elapsed()),
        Err(e) => return ExecutionOutcome::error(e.to_string(), start.elapsed()),
    };
    loop {
        match rows.next() {
            Ok(Some(row)) => {
                let mut cells = Vec::with_capacity(n);
                for i in 0..n {
                    match row.get_ref(i) {
                        Ok(v) => cells.push(Cell::from_value(v)),
                        Err(e) => return ExecutionOutcome::error(e.to_string(), start.elapsed()),
                    }
                }
                builder.push(cells);
            }
            Ok(None) => break,
            Err(e) if is_interrupt(&e) => return ExecutionOutcome::timeout(start.elapsed()),
            Err(e) => return ExecutionOutcome::error(e.to_string(), start.elapsed()),
        }
    }
    ExecutionOutcome::ok(builder.finish(), start.elapsed())
}

/// Compiles without running; returns the engine message on failure.
pub fn prepare_check(sql: &str, db: &DatabaseHandle) -> Result<(), String> {
    let _permit = global_pool().acquire();
    let conn = db.open_read_only().map_err(|e| e.to_string())?;
    conn.prepare(sql).map(|_| ()).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests;

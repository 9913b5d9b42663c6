//! Database schema catalog: tables, typed columns, keys and per-column statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("database error: {0}")]
    Database(#[from] rusqlite::Error),
    #[error("foreign key {0} references a missing table or column")]
    DanglingForeignKey(String),
    #[error("primary key column {table}.{column} does not exist")]
    MissingPrimaryKeyColumn { table: String, column: String },
    #[error("duplicate table {0}")]
    DuplicateTable(String),
    #[error("cannot read description file {path}: {message}")]
    Descriptions { path: PathBuf, message: String },
}

/// Read-only handle on a SQLite database file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseHandle {
    pub path: PathBuf,
}

impl DatabaseHandle {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        DatabaseHandle { path: path.into() }
    }

    pub fn open_read_only(&self) -> rusqlite::Result<Connection> {
        if !self.path.is_file() {
            return Err(rusqlite::Error::SqliteFailure(
                rusqlite::ffi::Error::new(rusqlite::ffi::SQLITE_CANTOPEN),
                Some(format!("database file not found: {}", self.path.display())),
            ));
        }
        Connection::open_with_flags(
            &self.path,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ColumnStats {
    pub total_count: u64,
    pub distinct_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub decl_type: String,
    pub nullable: bool,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub stats: ColumnStats,
}

impl ColumnDef {
    pub fn new(name: &str, decl_type: &str) -> Self {
        ColumnDef {
            name: name.to_string(),
            decl_type: decl_type.to_string(),
            nullable: true,
            description: String::new(),
            stats: ColumnStats::default(),
        }
    }

    /// SQLite type affinity is TEXT for declared types containing CHAR, CLOB or TEXT.
    pub fn is_text(&self) -> bool {
        let t = self.decl_type.to_ascii_uppercase();
        t.contains("CHAR") || t.contains("CLOB") || t.contains("TEXT")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }
}

/// Directed edge `from_table.from_column -> to_table.to_column`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_column: String,
    pub to_table: String,
    pub to_column: String,
}

impl std::fmt::Display for ForeignKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{} -> {}.{}", self.from_table, self.from_column, self.to_table, self.to_column)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub tables: Vec<TableDef>,
    pub primary_keys: BTreeMap<String, Vec<String>>,
    pub foreign_keys: Vec<ForeignKey>,
}

impl SchemaCatalog {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    /// Canonical `(table, column)` spelling for a case-insensitive lookup.
    pub fn resolve_column(&self, table: &str, column: &str) -> Option<(String, String)> {
        let t = self.table(table)?;
        let c = t.column(column)?;
        Some((t.name.clone(), c.name.clone()))
    }

    pub fn column(&self, table: &str, column: &str) -> Option<&ColumnDef> {
        self.table(table)?.column(column)
    }

    pub fn primary_key(&self, table: &str) -> &[String] {
        self.table(table)
            .and_then(|t| self.primary_keys.get(&t.name))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn is_primary_key(&self, table: &str, column: &str) -> bool {
        self.primary_key(table).iter().any(|c| c.eq_ignore_ascii_case(column))
    }

    pub fn foreign_keys_from<'a>(&'a self, table: &'a str) -> impl Iterator<Item = &'a ForeignKey> + 'a {
        self.foreign_keys.iter().filter(move |fk| fk.from_table.eq_ignore_ascii_case(table))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.iter().map(|t| t.name.clone()).collect()
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let mut seen = BTreeSet::new();
        for t in &self.tables {
            if !seen.insert(t.name.to_ascii_lowercase()) {
                return Err(CatalogError::DuplicateTable(t.name.clone()));
            }
        }
        for (table, cols) in &self.primary_keys {
            for c in cols {
                if self.column(table, c).is_none() {
                    return Err(CatalogError::MissingPrimaryKeyColumn { table: table.clone(), column: c.clone() });
                }
            }
        }
        for fk in &self.foreign_keys {
            if self.column(&fk.from_table, &fk.from_column).is_none() || self.column(&fk.to_table, &fk.to_column).is_none() {
                return Err(CatalogError::DanglingForeignKey(fk.to_string()));
            }
        }
        Ok(())
    }

    /// Reads the schema of a SQLite database. Foreign keys whose endpoints do not
    /// exist are dropped with a warning, since real benchmark schemas contain some.
    pub fn load(db: &DatabaseHandle) -> Result<SchemaCatalog, CatalogError> {
        let conn = db.open_read_only()?;
        let mut catalog = Self::from_connection(&conn)?;
        let sidecar = db.path.with_extension("descriptions.json");
        if sidecar.is_file() {
            catalog.apply_descriptions(&sidecar)?;
        }
        Ok(catalog)
    }

    pub fn from_connection(conn: &Connection) -> Result<SchemaCatalog, CatalogError> {
        let mut stmt = conn.prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
        )?;
        let names: Vec<String> = stmt.query_map([], |r| r.get(0))?.collect::<Result<_, _>>()?;

        let mut catalog = SchemaCatalog::default();
        let mut raw_fks = Vec::new();
        for name in &names {
            let quoted = quote_sql_ident(name);
            let mut info = conn.prepare(&format!("PRAGMA table_info({quoted})"))?;
            let mut columns = Vec::new();
            let mut pk: Vec<(i64, String)> = Vec::new();
            let rows = info.query_map([], |r| {
                Ok((r.get::<_, String>(1)?, r.get::<_, Option<String>>(2)?, r.get::<_, i64>(3)?, r.get::<_, i64>(5)?))
            })?;
            for row in rows {
                let (col, ty, notnull, pk_idx) = row?;
                if pk_idx > 0 {
                    pk.push((pk_idx, col.clone()));
                }
                let mut def = ColumnDef::new(&col, ty.as_deref().unwrap_or(""));
                def.nullable = notnull == 0 && pk_idx == 0;
                columns.push(def);
            }
            pk.sort();
            if !pk.is_empty() {
                catalog.primary_keys.insert(name.clone(), pk.into_iter().map(|(_, c)| c).collect());
            }

            if !columns.is_empty() {
                let exprs: Vec<String> = columns
                    .iter()
                    .map(|c| format!("COUNT(DISTINCT {})", quote_sql_ident(&c.name)))
                    .collect();
                let sql = format!("SELECT COUNT(*), {} FROM {quoted}", exprs.join(", "));
                let counts: Vec<i64> = conn.query_row(&sql, [], |r| {
                    (0..=columns.len()).map(|i| r.get::<_, i64>(i)).collect::<Result<Vec<_>, _>>()
                })?;
                for (i, col) in columns.iter_mut().enumerate() {
                    col.stats = ColumnStats { total_count: counts[0] as u64, distinct_count: counts[i + 1] as u64 };
                }
            }

            let mut fk_stmt = conn.prepare(&format!("PRAGMA foreign_key_list({quoted})"))?;
            let fks = fk_stmt.query_map([], |r| {
                Ok((r.get::<_, i64>(1)?, r.get::<_, String>(2)?, r.get::<_, String>(3)?, r.get::<_, Option<String>>(4)?))
            })?;
            for fk in fks {
                let (seq, to_table, from_col, to_col) = fk?;
                raw_fks.push((name.clone(), seq, to_table, from_col, to_col));
            }
            catalog.tables.push(TableDef { name: name.clone(), columns });
        }

        for (from_table, seq, to_table, from_col, to_col) in raw_fks {
            let to_col = match to_col {
                Some(c) => Some(c),
                None => catalog.primary_key(&to_table).get(seq as usize).cloned(),
            };
            let resolved = to_col.and_then(|tc| {
                let (tt, tc) = catalog.resolve_column(&to_table, &tc)?;
                let (ft, fc) = catalog.resolve_column(&from_table, &from_col)?;
                Some(ForeignKey { from_table: ft, from_column: fc, to_table: tt, to_column: tc })
            });
            match resolved {
                Some(fk) if !catalog.foreign_keys.contains(&fk) => catalog.foreign_keys.push(fk),
                Some(_) => {}
                None => log::warn!("dropping foreign key {from_table}.{from_col} -> {to_table}: endpoint missing"),
            }
        }
        Ok(catalog)
    }

    /// Applies a `{"table.column": "description"}` JSON sidecar.
    pub fn apply_descriptions(&mut self, path: &Path) -> Result<(), CatalogError> {
        let err = |message: String| CatalogError::Descriptions { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let map: BTreeMap<String, String> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        for (key, desc) in map {
            let Some((t, c)) = key.split_once('.') else { continue };
            for table in &mut self.tables {
                if table.name.eq_ignore_ascii_case(t) {
                    for col in &mut table.columns {
                        if col.name.eq_ignore_ascii_case(c) {
                            col.description = desc.clone();
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn quote_sql_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Small builder used by tests and examples.
#[derive(Default)]
pub struct CatalogBuilder {
    catalog: SchemaCatalog,
}

impl CatalogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a table; columns are `(name, type)` pairs.
    pub fn table(mut self, name: &str, columns: &[(&str, &str)]) -> Self {
        self.catalog.tables.push(TableDef {
            name: name.to_string(),
            columns: columns.iter().map(|(n, t)| ColumnDef::new(n, t)).collect(),
        });
        self
    }

    pub fn primary_key(mut self, table: &str, columns: &[&str]) -> Self {
        self.catalog
            .primary_keys
            .insert(table.to_string(), columns.iter().map(|c| c.to_string()).collect());
        self
    }

    pub fn foreign_key(mut self, from: (&str, &str), to: (&str, &str)) -> Self {
        self.catalog.foreign_keys.push(ForeignKey {
            from_table: from.0.to_string(),
            from_column: from.1.to_string(),
            to_table: to.0.to_string(),
            to_column: to.1.to_string(),
        });
        self
    }

    pub fn build(self) -> SchemaCatalog {
        self.catalog
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_keys_and_stats_from_sqlite() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.sqlite");
        let conn = Connection::open(&path).unwrap();
        conn.execute_batch(
            "CREATE TABLE district (district_id INTEGER PRIMARY KEY, A2 TEXT);
             CREATE TABLE account (account_id INTEGER PRIMARY KEY, district_id INTEGER REFERENCES district);
             INSERT INTO district VALUES (1, 'Pisek'), (2, 'Praha'), (3, 'Praha');
             INSERT INTO account VALUES (10, 1), (11, 1);",
        )
        .unwrap();
        drop(conn);
        let cat = SchemaCatalog::load(&DatabaseHandle::new(&path)).unwrap();
        cat.validate().unwrap();
        assert_eq!(cat.table_names(), vec!["district", "account"]);
        assert_eq!(cat.primary_key("ACCOUNT"), &["account_id".to_string()]);
        assert_eq!(
            cat.foreign_keys,
            vec![ForeignKey {
                from_table: "account".into(),
                from_column: "district_id".into(),
                to_table: "district".into(),
                to_column: "district_id".into()
            }]
        );
        let a2 = cat.column("district", "a2").unwrap();
        assert_eq!(a2.stats, ColumnStats { total_count: 3, distinct_count: 2 });
        assert!(a2.is_text());
    }

    #[test]
    fn dangling_foreign_key_fails_validation() {
        let cat = CatalogBuilder::new()
            .table("a", &[("id", "INTEGER")])
            .foreign_key(("a", "id"), ("b", "id"))
            .build();
        assert!(matches!(cat.validate(), Err(CatalogError::DanglingForeignKey(_))));
    }
}

//! Shared fixtures for unit tests.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use rusqlite::Connection;

use crate::catalog::{DatabaseHandle, SchemaCatalog};
use crate::llm::{Gateway, GatewayConfig, ScriptRule, ScriptedBackend, TemplateSet};

pub const FINANCIAL_SQL: &str = include_str!("../tests/fixtures/financial.sql");

pub fn sqlite_from(dir: &Path, name: &str, sql: &str) -> DatabaseHandle {
    let path = dir.join(name);
    let conn = Connection::open(&path).unwrap();
    conn.execute_batch(sql).unwrap();
    DatabaseHandle::new(path)
}

pub fn financial_db(dir: &Path) -> (DatabaseHandle, SchemaCatalog) {
    let db = sqlite_from(dir, "financial.sqlite", FINANCIAL_SQL);
    let catalog = SchemaCatalog::load(&db).unwrap();
    (db, catalog)
}

pub fn gateway(rules: Vec<ScriptRule>) -> Gateway {
    let config = GatewayConfig { backoff: Duration::ZERO, ..GatewayConfig::default() };
    Gateway::new(Arc::new(ScriptedBackend::new(rules)), TemplateSet::builtin(), config)
}

//! C ABI over sqlforge.
//!
//! Every function returns an `sf_status`. On failure the message is available
//! from `sf_last_error` on the same thread until the next call. Strings handed
//! out through `char **` parameters are owned by the caller and released with
//! `sf_string_free`; handles are released with their `_free` function.
#![allow(non_camel_case_types, clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::time::Duration;

use sqlforge::catalog::{DatabaseHandle, SchemaCatalog};
use sqlforge::executor::{execute, results_equivalent, CanonicalResult};
use sqlforge::generation::{full_subset, render_schema_context, RenderedSchemaContext};
use sqlforge::llm::TokenLedger;
use sqlforge::pipeline::{DatabaseContext, Pipeline, PipelineConfig};
use sqlforge::sql_ast::{extract_schema_refs, find_patterns, parse_sql, SqlTree};
use sqlforge::toolchain::{check_all, RevisionContext};
use sqlforge::value_index::RetrievedValuesMap;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum sf_status {
    SF_OK = 0,
    SF_ERR_NULL_ARGUMENT = 1,
    SF_ERR_INVALID_UTF8 = 2,
    SF_ERR_PARSE = 3,
    SF_ERR_DATABASE = 4,
    SF_ERR_CONFIG = 5,
    SF_ERR_INVALID_ARGUMENT = 6,
    SF_ERR_PIPELINE = 7,
    SF_ERR_PANIC = 8,
}

use sf_status::*;

/// Parsed SQL statement.
pub struct sf_sql_tree {
    tree: SqlTree,
}

/// Opened SQLite database with its loaded catalog.
pub struct sf_database {
    db: DatabaseHandle,
    catalog: SchemaCatalog,
    schema: RenderedSchemaContext,
}

/// Configured pipeline: backend, embedder, templates and few-shot store.
pub struct sf_pipeline {
    pipeline: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(sf_status, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: sf_status, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, converting errors and panics into a status plus last-error message.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> sf_status {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SF_OK,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            SF_ERR_PANIC
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(SF_ERR_NULL_ARGUMENT, format!("{name} is NULL"));
    }
    CStr::from_ptr(p).to_str().or_else(|_| fail(SF_ERR_INVALID_UTF8, format!("{name} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().map_or_else(|| fail(SF_ERR_NULL_ARGUMENT, format!("{name} is NULL")), Ok)
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().map_or_else(|| fail(SF_ERR_NULL_ARGUMENT, format!("{name} is NULL")), Ok)
}

fn c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("interior NULs replaced").into_raw()
}

fn to_json<T: serde::Serialize>(v: &T) -> FfiResult<String> {
    serde_json::to_string(v).or_else(|e| fail(SF_ERR_PIPELINE, e.to_string()))
}

/// Message for the last failed call on this thread, or NULL. Valid until the next call.
#[no_mangle]
pub extern "C" fn sf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn sf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---- SQL trees

#[no_mangle]
pub unsafe extern "C" fn sf_sql_parse(sql: *const c_char, out: *mut *mut sf_sql_tree) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let sql = str_arg(sql, "sql")?;
        let tree = parse_sql(sql).or_else(|e| fail(SF_ERR_PARSE, e.to_string()))?;
        *out = Box::into_raw(Box::new(sf_sql_tree { tree }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_sql_tree_free(tree: *mut sf_sql_tree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// Canonical SQL text of the tree.
#[no_mangle]
pub unsafe extern "C" fn sf_sql_tree_render(tree: *const sf_sql_tree, out: *mut *mut c_char) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = c_string(handle(tree, "tree")?.tree.to_string());
        Ok(())
    })
}

/// JSON array of pattern matches of `kind` (e.g. "join-nonstandard", "maxmin-subquery").
#[no_mangle]
pub unsafe extern "C" fn sf_sql_tree_find_patterns(tree: *const sf_sql_tree, kind: *const c_char, out: *mut *mut c_char) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let tree = handle(tree, "tree")?;
        let kind = str_arg(kind, "kind")?;
        let found = find_patterns(&tree.tree, kind).or_else(|e| fail(SF_ERR_INVALID_ARGUMENT, e.to_string()))?;
        *out = c_string(to_json(&found)?);
        Ok(())
    })
}

/// JSON object of the tables and columns the tree references in `db`.
#[no_mangle]
pub unsafe extern "C" fn sf_sql_tree_schema_refs(tree: *const sf_sql_tree, db: *const sf_database, out: *mut *mut c_char) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let refs = extract_schema_refs(&handle(tree, "tree")?.tree, &handle(db, "db")?.catalog);
        *out = c_string(to_json(&refs)?);
        Ok(())
    })
}

// ---- databases

#[no_mangle]
pub unsafe extern "C" fn sf_database_open(path: *const c_char, out: *mut *mut sf_database) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let db = DatabaseHandle::new(str_arg(path, "path")?);
        let catalog = SchemaCatalog::load(&db).or_else(|e| fail(SF_ERR_DATABASE, e.to_string()))?;
        let schema = render_schema_context(&full_subset(&catalog), &catalog, &RetrievedValuesMap::default());
        *out = Box::into_raw(Box::new(sf_database { db, catalog, schema }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_database_free(db: *mut sf_database) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Schema rendered as annotated CREATE TABLE statements.
#[no_mangle]
pub unsafe extern "C" fn sf_database_schema(db: *const sf_database, out: *mut *mut c_char) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = c_string(handle(db, "db")?.schema.text.clone());
        Ok(())
    })
}

/// Executes read-only `sql`; writes the execution outcome as JSON. A failing query
/// is still `SF_OK` with `"status": "error"` in the JSON.
#[no_mangle]
pub unsafe extern "C" fn sf_execute_json(db: *const sf_database, sql: *const c_char, timeout_ms: u64, out: *mut *mut c_char) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let db = handle(db, "db")?;
        let sql = str_arg(sql, "sql")?;
        if timeout_ms == 0 {
            return fail(SF_ERR_INVALID_ARGUMENT, "timeout_ms must be positive");
        }
        let outcome = execute(sql, &db.db, Duration::from_millis(timeout_ms));
        *out = c_string(to_json(&outcome)?);
        Ok(())
    })
}

/// Compares two canonical results given as JSON (the `result` field of `sf_execute_json`).
#[no_mangle]
pub unsafe extern "C" fn sf_results_equivalent(a_json: *const c_char, b_json: *const c_char, order_sensitive: bool, out: *mut bool) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let parse = |s: &str, name: &str| -> FfiResult<CanonicalResult> {
            serde_json::from_str(s).or_else(|e| fail(SF_ERR_INVALID_ARGUMENT, format!("{name}: {e}")))
        };
        let a = parse(str_arg(a_json, "a_json")?, "a_json")?;
        let b = parse(str_arg(b_json, "b_json")?, "b_json")?;
        *out = results_equivalent(&a, &b, order_sensitive);
        Ok(())
    })
}

/// Runs every checker on `sql`. Writes the reports as a JSON array and the number
/// of failing checkers to `failed` (may be NULL).
#[no_mangle]
pub unsafe extern "C" fn sf_check_sql(db: *const sf_database, sql: *const c_char, out: *mut *mut c_char, failed: *mut u32) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let db = handle(db, "db")?;
        let sql = str_arg(sql, "sql")?;
        let ctx = RevisionContext {
            question: "",
            hint: "",
            schema: &db.schema,
            catalog: &db.catalog,
            db: &db.db,
            timeout: Duration::from_secs(30),
        };
        let reports = check_all(sql.trim(), &ctx);
        if let Some(f) = failed.as_mut() {
            *f = reports.iter().filter(|r| !r.passed).count() as u32;
        }
        *out = c_string(to_json(&reports)?);
        Ok(())
    })
}

// ---- pipeline

/// Builds a pipeline from a TOML config file, or from defaults when `config_path` is NULL.
#[no_mangle]
pub unsafe extern "C" fn sf_pipeline_new(config_path: *const c_char, out: *mut *mut sf_pipeline) -> sf_status {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let config = match opt_str_arg(config_path, "config_path")? {
            Some(p) => PipelineConfig::from_file(&PathBuf::from(p)).or_else(|e| fail(SF_ERR_CONFIG, e.to_string()))?,
            None => PipelineConfig::default(),
        };
        let pipeline = Pipeline::new(config).or_else(|e| fail(SF_ERR_CONFIG, e.to_string()))?;
        *out = Box::into_raw(Box::new(sf_pipeline { pipeline }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn sf_pipeline_free(p: *mut sf_pipeline) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Answers one question against the database at `db_path`. Writes the final SQL to
/// `out_sql`; when `out_run_json` is non-NULL it receives every intermediate artifact.
#[no_mangle]
pub unsafe extern "C" fn sf_pipeline_ask(
    p: *const sf_pipeline,
    db_path: *const c_char,
    question: *const c_char,
    hint: *const c_char,
    out_sql: *mut *mut c_char,
    out_run_json: *mut *mut c_char,
) -> sf_status {
    guard(|| {
        let out_sql = out_ptr(out_sql, "out_sql")?;
        *out_sql = ptr::null_mut();
        let p = &handle(p, "pipeline")?.pipeline;
        let db_path = str_arg(db_path, "db_path")?;
        let question = str_arg(question, "question")?;
        let hint = opt_str_arg(hint, "hint")?.unwrap_or("");
        let dbc = DatabaseContext::open(DatabaseHandle::new(db_path), p.embedder.as_ref(), None)
            .or_else(|e| fail(SF_ERR_DATABASE, e.to_string()))?;
        let ledger = TokenLedger::new();
        let run = p.run_question(question, hint, &dbc, &ledger).or_else(|e| fail(SF_ERR_PIPELINE, e.to_string()))?;
        if let Some(o) = out_run_json.as_mut() {
            *o = c_string(to_json(&run)?);
        }
        *out_sql = c_string(run.final_sql().to_string());
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let status = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(status, SF_ERR_PANIC);
        let msg = unsafe { CStr::from_ptr(sf_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "internal panic: boom");
    }

    #[test]
    fn interior_nul_is_replaced() {
        let p = c_string("a\0b".into());
        assert_eq!(unsafe { CStr::from_ptr(p) }.to_str().unwrap(), "a b");
        unsafe { sf_string_free(p) };
    }

    #[test]
    fn version_matches_package() {
        let v = unsafe { CStr::from_ptr(sf_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::testutil::{financial_db, sqlite_from};

fn int_rows(rows: &[&[i64]]) -> CanonicalResult {
    let width = rows.first().map_or(1, |r| r.len());
    CanonicalResult::from_rows(width, rows.iter().map(|r| r.iter().map(|v| Cell::Int(*v)).collect()).collect())
}

/// Brute-force bag comparison: match each row of `a` to an unused equal row of `b`.
fn bag_oracle(a: &[Vec<Cell>], b: &[Vec<Cell>]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    'outer: for r in a {
        for (j, s) in b.iter().enumerate() {
            if !used[j] && r == s {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

#[test]
fn equivalence_examples() {
    let ab = int_rows(&[&[1], &[2]]);
    let ba = int_rows(&[&[2], &[1]]);
    assert!(results_equivalent(&ab, &ba, false));
    assert!(!results_equivalent(&ab, &ba, true));
    let dup = int_rows(&[&[1], &[1]]);
    let one = int_rows(&[&[1]]);
    assert!(!results_equivalent(&dup, &one, false));
    assert!(results_equivalent_with(&dup, &one, false, RowSemantics::Set));
    let empty1 = CanonicalResult::from_rows(1, vec![]);
    let empty2 = CanonicalResult::from_rows(2, vec![]);
    assert!(!results_equivalent(&empty1, &empty2, false));
}

#[test]
fn numeric_canonicalization() {
    assert_eq!(Cell::from_f64(3.0), Cell::Int(3));
    assert_eq!(Cell::from_f64(0.1 + 0.2), Cell::from_f64(0.3));
    assert_eq!(Cell::from_f64(1.5), Cell::Real(1_500_000));
    assert_eq!(Cell::from_f64(-2.25).display(), "-2.25");
    assert!(matches!(Cell::from_f64(1e40), Cell::Float(_)));
}

#[test]
fn executes_against_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (db, _) = financial_db(dir.path());
    let out = execute("SELECT COUNT(*) FROM trans WHERE k_symbol = 'SIPO'", &db, DEFAULT_TIMEOUT);
    assert!(out.is_ok());
    assert_eq!(out.result.unwrap().rows, vec![vec![Cell::Int(4)]]);
    let avg = execute("SELECT AVG(amount) FROM trans WHERE account_id = 10", &db, DEFAULT_TIMEOUT);
    assert_eq!(avg.result.unwrap().rows, vec![vec![Cell::Int(600)]]);
}

#[test]
fn syntax_error_reports_engine_message() {
    let dir = tempfile::tempdir().unwrap();
    let db = sqlite_from(dir.path(), "t.sqlite", "CREATE TABLE t (a INTEGER);");
    let out = execute("SELECT * FORM t", &db, DEFAULT_TIMEOUT);
    assert_eq!(out.status, ExecStatus::Error);
    assert!(out.error.as_deref().unwrap().contains("syntax error"), "{:?}", out.error);
    assert!(out.describe().starts_with("Error: "));
}

#[test]
fn runaway_query_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let db = sqlite_from(dir.path(), "t.sqlite", "CREATE TABLE t (a INTEGER);");
    let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT COUNT(*) FROM c";
    let started = std::time::Instant::now();
    let out = execute(sql, &db, Duration::from_millis(200));
    assert_eq!(out.status, ExecStatus::Timeout);
    assert!(started.elapsed() < Duration::from_secs(5));
}

#[test]
fn writes_are_rejected_and_database_is_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let (db, _) = financial_db(dir.path());
    let before = std::fs::read(&db.path).unwrap();
    for sql in ["DELETE FROM trans", "INSERT INTO district VALUES (9, 'x', 'y')", "DROP TABLE account", "UPDATE trans SET amount = 0"] {
        let out = execute(sql, &db, DEFAULT_TIMEOUT);
        assert_eq!(out.status, ExecStatus::Error, "{sql}");
    }
    execute("SELECT * FROM trans", &db, DEFAULT_TIMEOUT);
    assert_eq!(std::fs::read(&db.path).unwrap(), before);
}

#[test]
fn missing_database_is_an_error() {
    let out = execute("SELECT 1", &DatabaseHandle::new("/nonexistent/x.sqlite"), DEFAULT_TIMEOUT);
    assert_eq!(out.status, ExecStatus::Error);
    assert!(out.error.unwrap().contains("database file not found"));
}

#[test]
fn truncated_results_compare_by_digest() {
    let dir = tempfile::tempdir().unwrap();
    let db = sqlite_from(dir.path(), "t.sqlite", "CREATE TABLE t (a INTEGER);");
    let n = ROW_CAP + 5;
    let asc = execute(&format!("WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c WHERE x < {n}) SELECT x FROM c"), &db, DEFAULT_TIMEOUT)
        .result
        .unwrap();
    let desc = execute(
        &format!("WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c WHERE x < {n}) SELECT x FROM c ORDER BY x DESC"),
        &db,
        DEFAULT_TIMEOUT,
    )
    .result
    .unwrap();
    assert!(asc.truncated);
    assert_eq!(asc.rows.len(), ROW_CAP);
    assert_eq!(asc.row_count, n as u64);
    assert!(results_equivalent(&asc, &desc, false));
    assert!(!results_equivalent(&asc, &desc, true));
}

#[test]
fn all_null_and_empty() {
    assert!(CanonicalResult::from_rows(2, vec![vec![Cell::Null, Cell::Null]]).all_null());
    assert!(!CanonicalResult::from_rows(1, vec![]).all_null());
    assert!(CanonicalResult::from_rows(1, vec![]).is_empty());
}

fn arb_cell() -> impl Strategy<Value = Cell> {
    prop_oneof![
        Just(Cell::Null),
        (0i64..3).prop_map(Cell::Int),
        (0i128..3).prop_map(|m| Cell::Real(m * 500_000 + 1)),
        "[ab]{0,1}".prop_map(Cell::Text),
    ]
}

fn arb_result() -> impl Strategy<Value = CanonicalResult> {
    (1usize..3).prop_flat_map(|w| {
        proptest::collection::vec(proptest::collection::vec(arb_cell(), w), 0..6).prop_map(move |rows| CanonicalResult::from_rows(w, rows))
    })
}

/// A permutation (and sometimes perturbation) of `r`.
fn arb_pair() -> impl Strategy<Value = (CanonicalResult, CanonicalResult)> {
    (arb_result(), any::<u64>(), any::<bool>()).prop_map(|(a, seed, drop)| {
        let mut rows = a.rows.clone();
        let n = rows.len();
        for i in 0..n {
            let j = (seed as usize).wrapping_mul(31).wrapping_add(i * 7) % n;
            rows.swap(i, j);
        }
        if drop && !rows.is_empty() {
            rows.pop();
        }
        (a.clone(), CanonicalResult::from_rows(a.column_count, rows))
    })
}

proptest! {
    #[test]
    fn matches_bag_oracle((a, b) in arb_pair()) {
        prop_assert_eq!(results_equivalent(&a, &b, false), bag_oracle(&a.rows, &b.rows));
        prop_assert_eq!(results_equivalent(&a, &b, true), a.rows == b.rows);
        prop_assert_eq!(a.cluster_key() == b.cluster_key(), bag_oracle(&a.rows, &b.rows));
    }

    #[test]
    fn equivalence_relation(a in arb_result(), b in arb_result(), c in arb_result(), ord in any::<bool>()) {
        prop_assert!(results_equivalent(&a, &a, ord));
        prop_assert_eq!(results_equivalent(&a, &b, ord), results_equivalent(&b, &a, ord));
        if results_equivalent(&a, &b, ord) && results_equivalent(&b, &c, ord) {
            prop_assert!(results_equivalent(&a, &c, ord));
        }
    }

    #[test]
    fn canonicalization_is_idempotent(a in arb_result(), x in -1e9f64..1e9) {
        prop_assert_eq!(a.canonicalize(), a.clone());
        prop_assert_eq!(a.canonicalize().canonicalize(), a.canonicalize());
        let c = Cell::from_f64(x);
        prop_assert_eq!(c.canonicalize(), c);
    }
}

//! Byte-for-byte goldens for rendered prompts and checker directives.
//! Set `SQLFORGE_BLESS=1` to rewrite the stored files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rusqlite::Connection;
use serde::Deserialize;

use sqlforge::catalog::{DatabaseHandle, SchemaCatalog};
use sqlforge::generation::{full_subset, render_schema_context};
use sqlforge::llm::{templates, TemplateSet};
use sqlforge::toolchain::{check_all, RevisionContext};
use sqlforge::value_index::RetrievedValuesMap;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn golden(name: &str, actual: &str) {
    let path = fixtures().join("goldens").join(name);
    if std::env::var_os("SQLFORGE_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from golden\n--- expected\n{expected}\n--- actual\n{actual}");
}

fn financial(dir: &Path) -> (DatabaseHandle, SchemaCatalog) {
    let path = dir.join("financial.sqlite");
    Connection::open(&path)
        .unwrap()
        .execute_batch(&std::fs::read_to_string(fixtures().join("financial.sql")).unwrap())
        .unwrap();
    let db = DatabaseHandle::new(path);
    let catalog = SchemaCatalog::load(&db).unwrap();
    (db, catalog)
}

fn placeholder_values(schema: &str) -> BTreeMap<String, String> {
    let fixed = [
        ("QUESTION", "How many accounts have a SIPO household payment?"),
        ("HINT", "household payment refers to k_symbol = 'SIPO'"),
        ("DATABASE_SCHEMA", schema),
        ("FEW_SHOT_EXAMPLES", "Question: How many {ENTITY} are there in {LOCATION}?\nSQL: SELECT COUNT(*) FROM t WHERE city = 'x'"),
        ("QUERY", "SELECT COUNT(DISTINCT account_id) FROM trans WHERE k_symbol = 'SIPO'"),
        ("RESULT", "1 row(s)\n(3)"),
        ("SUGGESTIONS", "[null] The ordering column k_symbol may contain NULLs."),
        ("CANDIDATE_A", "SELECT COUNT(DISTINCT account_id) FROM trans WHERE k_symbol = 'SIPO'"),
        ("RESULT_A", "1 row(s)\n(3)"),
        ("CANDIDATE_B", "SELECT COUNT(*) FROM trans WHERE k_symbol = 'SIPO'"),
        ("RESULT_B", "1 row(s)\n(4)"),
    ];
    fixed.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn rendered_templates_match_goldens() {
    let dir = tempfile::tempdir().unwrap();
    let (_, catalog) = financial(dir.path());
    let schema = render_schema_context(&full_subset(&catalog), &catalog, &RetrievedValuesMap::default());
    let values = placeholder_values(&schema.text);
    let set = TemplateSet::builtin();
    let ids = [
        templates::KEYWORD_EXTRACTION,
        templates::DIRECT_LINKING,
        templates::DIVIDE_CONQUER,
        templates::ICL,
        templates::SKELETON,
        templates::EXECUTION_REVISION,
        templates::RULE_REVISION,
        templates::ADJUDICATION,
    ];
    assert_eq!(set.ids().count(), ids.len());
    for id in ids {
        let needed: BTreeMap<String, String> =
            set.placeholders(id).unwrap().into_iter().map(|p| (p.clone(), values[&p].clone())).collect();
        golden(&format!("{id}.txt"), &set.render(id, &needed).unwrap());
    }
}

#[derive(Deserialize)]
struct Corpus {
    case: Vec<Case>,
}

#[derive(Deserialize)]
struct Case {
    checker: Option<String>,
    sql: String,
}

#[test]
fn directives_match_golden() {
    let dir = tempfile::tempdir().unwrap();
    let (db, catalog) = financial(dir.path());
    let schema = render_schema_context(&full_subset(&catalog), &catalog, &RetrievedValuesMap::default());
    let ctx = RevisionContext { question: "q", hint: "", schema: &schema, catalog: &catalog, db: &db, timeout: Duration::from_secs(5) };
    let corpus: Corpus = toml::from_str(&std::fs::read_to_string(fixtures().join("checker_corpus.toml")).unwrap()).unwrap();
    let mut out = String::new();
    for case in corpus.case.iter().filter(|c| c.checker.is_some()) {
        out.push_str(&format!("# {}\n", case.sql));
        for r in check_all(&case.sql, &ctx) {
            if let Some(d) = &r.directive {
                out.push_str(d);
                out.push('\n');
            }
        }
    }
    golden("directives.txt", &out);
}

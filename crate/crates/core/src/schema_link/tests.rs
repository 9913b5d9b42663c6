use std::collections::VecDeque;

use proptest::prelude::*;

use super::*;
use crate::catalog::CatalogBuilder;
use crate::llm::{ScriptRule, ScriptedFailure};
use crate::testutil::gateway;
use crate::value_index::ScoredValue;

fn tiny() -> SchemaCatalog {
    CatalogBuilder::new()
        .table("t", &[("id", "INTEGER"), ("a", "TEXT"), ("b", "INTEGER")])
        .table("t1", &[("id", "INTEGER"), ("a", "TEXT"), ("t2_id", "INTEGER")])
        .table("t2", &[("id", "INTEGER"), ("b", "TEXT")])
        .primary_key("t", &["id"])
        .primary_key("t1", &["id"])
        .primary_key("t2", &["id"])
        .foreign_key(("t1", "t2_id"), ("t2", "id"))
        .build()
}

/// The running example's tables and keys.
fn financial() -> SchemaCatalog {
    CatalogBuilder::new()
        .table("account", &[("account_id", "INTEGER"), ("district_id", "INTEGER"), ("frequency", "TEXT")])
        .table("district", &[("district_id", "INTEGER"), ("A2", "TEXT"), ("A3", "TEXT")])
        .table("trans", &[("trans_id", "INTEGER"), ("account_id", "INTEGER"), ("k_symbol", "TEXT"), ("amount", "INTEGER")])
        .primary_key("account", &["account_id"])
        .primary_key("district", &["district_id"])
        .primary_key("trans", &["trans_id"])
        .foreign_key(("account", "district_id"), ("district", "district_id"))
        .foreign_key(("trans", "account_id"), ("account", "account_id"))
        .build()
}

fn subset(cols: &[(&str, &str)], tables: &[&str]) -> SchemaSubset {
    let mut s = SchemaSubset::new();
    for t in tables {
        s.insert_table(t);
    }
    for (t, c) in cols {
        s.insert_column(t, c);
    }
    s
}

fn inputs<'a>(q: &'a str, catalog: &'a SchemaCatalog, values: &'a RetrievedValuesMap) -> LinkInputs<'a> {
    LinkInputs { question: q, hint: "", catalog, values }
}

fn one_sample() -> SamplingConfig {
    SamplingConfig { budget: 1, temperature: 0.7 }
}

#[test]
fn parses_direct_link_xml() {
    let s = parse_link_xml(r#"<reasoning>r</reasoning><result><table table_name="t"><column column_name="a"/></table></result>"#).unwrap();
    assert_eq!(s, subset(&[("t", "a")], &[]));
    let s = parse_link_xml(
        "<result>\n  <table table_name=\"t1\">\n    <column column_name=\"a\" />\n    <column column_name=\"id\"/>\n  </table>\n  <table table_name=\"t2\"/>\n</result>",
    )
    .unwrap();
    assert_eq!(s, subset(&[("t1", "a"), ("t1", "id")], &["t2"]));
    assert!(parse_link_xml("no xml").is_none());
}

#[test]
fn direct_link_filters_and_unions() {
    let catalog = tiny();
    let values = RetrievedValuesMap::default();
    let gw = gateway(vec![ScriptRule::new(
        templates::DIRECT_LINKING,
        &[r#"<result><table table_name="t1"><column column_name="a"/><column column_name="ghost"/></table></result>"#,
          r#"<result><table table_name="t2"><column column_name="b"/></table></result>"#],
    )]);
    let ledger = TokenLedger::new();
    let out = direct_link(&inputs("q", &catalog, &values), &gw, &ledger, SamplingConfig { budget: 2, temperature: 0.7 }).unwrap();
    // oracle: union by hand of {t1.a} and {t2.b}
    assert_eq!(out.subset, subset(&[("t1", "a"), ("t2", "b")], &[]));
    assert_eq!(out.warnings, ["direct linking named unknown element t1.ghost"]);
    assert_eq!(ledger.stage_totals()[&Stage::SchemaLinking].calls, 2);
    let bad = gateway(vec![ScriptRule::new(templates::DIRECT_LINKING, &["nothing"])]);
    assert!(matches!(direct_link(&inputs("q", &catalog, &values), &bad, &ledger, one_sample()), Err(LinkError::Llm(_))));
}

#[test]
fn reversed_link_extracts_draft_references() {
    let catalog = tiny();
    let values = RetrievedValuesMap::default();
    let run = |draft: &str| {
        let gw = gateway(vec![ScriptRule::new(templates::ICL, &[draft])]);
        reversed_link(&inputs("q", &catalog, &values), &FewShotStore::default(), 0, &gw, &TokenLedger::new(), one_sample()).unwrap()
    };
    assert_eq!(run("<result>SELECT a FROM t WHERE b=1</result>").subset, subset(&[("t", "a"), ("t", "b")], &[]));
    let three = run("<result>SELECT T1.a FROM t1 AS T1 JOIN t2 AS T2 ON T1.t2_id = T2.id JOIN t ON t.id = T2.id</result>");
    // oracle: manual extraction of the fixture query
    assert_eq!(
        three.subset,
        subset(&[("t1", "a"), ("t1", "t2_id"), ("t2", "id"), ("t", "id")], &["t", "t1", "t2"])
    );
    let broken = run("<result>SELECT FROM WHERE</result>");
    assert!(broken.subset.is_empty());
    assert_eq!(broken.warnings.len(), 1);
}

fn values_with(entries: &[(&str, &str, &str, f64)]) -> RetrievedValuesMap {
    let mut m = RetrievedValuesMap::default();
    for (t, c, v, s) in entries {
        let mut list = m.get(t, c).to_vec();
        list.push(ScoredValue { value: v.to_string(), score: *s });
        m.insert(t, c, list);
    }
    m
}

#[test]
fn value_link_threshold_is_strict() {
    let catalog = financial();
    let hit = values_with(&[("account", "frequency", "x", 0.99)]);
    assert_eq!(value_link(&hit, &catalog, 0.98), subset(&[("account", "frequency")], &[]));
    let miss = values_with(&[("account", "frequency", "x", 0.98), ("district", "A2", "y", 0.5)]);
    assert!(value_link(&miss, &catalog, 0.98).is_empty());
    let sipo = values_with(&[("trans", "k_symbol", "SIPO", 1.0), ("district", "A2", "Pisek", 0.97)]);
    assert_eq!(value_link(&sipo, &catalog, DEFAULT_THETA_VAL), subset(&[("trans", "k_symbol")], &[]));
}

#[test]
fn union_examples() {
    let a = subset(&[("t1", "a")], &[]);
    let e = SchemaSubset::new();
    assert_eq!(union_schemas(&[(Provenance::Direct, &a), (Provenance::Reversed, &e), (Provenance::Value, &e)]).0, a);
    let (u, p) = union_schemas(&[(Provenance::Direct, &a), (Provenance::Reversed, &a)]);
    assert_eq!(u, a);
    assert_eq!(p["t1.a"], BTreeSet::from([Provenance::Direct, Provenance::Reversed]));
    let b = subset(&[("t2", "b")], &[]);
    let c = subset(&[("t", "a")], &[]);
    let (u, _) = union_schemas(&[(Provenance::Direct, &a), (Provenance::Reversed, &b), (Provenance::Value, &c)]);
    assert_eq!(u.columns.len(), 3);
}

#[test]
fn closure_adds_fk_and_pk_columns() {
    let catalog = financial();
    let linked = enforce_closure(&subset(&[("account", "frequency"), ("district", "A2")], &[]), &catalog);
    // oracle: manual closure over the running example
    assert_eq!(
        linked.subset,
        subset(&[("account", "frequency"), ("account", "district_id"), ("account", "account_id"), ("district", "A2"), ("district", "district_id")], &[])
    );
    assert!(linked.connected);
    assert_eq!(linked.provenance("account", Some("district_id")), Some(&BTreeSet::from([Provenance::Closure])));
    assert_eq!(linked.provenance("account", Some("frequency")), None);
}

fn chain_catalog() -> SchemaCatalog {
    CatalogBuilder::new()
        .table("A", &[("id", "INTEGER"), ("b_id", "INTEGER")])
        .table("B", &[("id", "INTEGER"), ("c_id", "INTEGER")])
        .table("C", &[("id", "INTEGER"), ("x", "TEXT")])
        .table("D", &[("id", "INTEGER"), ("a_id", "INTEGER")])
        .primary_key("A", &["id"])
        .primary_key("B", &["id"])
        .primary_key("C", &["id"])
        .primary_key("D", &["id"])
        .foreign_key(("A", "b_id"), ("B", "id"))
        .foreign_key(("B", "c_id"), ("C", "id"))
        .foreign_key(("D", "a_id"), ("A", "id"))
        .build()
}

/// Independent BFS returning the interior tables of one shortest path.
fn bfs_interior(catalog: &SchemaCatalog, from: &str, to: &str) -> Vec<String> {
    let mut prev: BTreeMap<String, String> = BTreeMap::new();
    let mut queue = VecDeque::from([from.to_string()]);
    let mut seen = BTreeSet::from([from.to_string()]);
    while let Some(t) = queue.pop_front() {
        for fk in &catalog.foreign_keys {
            let n = if fk.from_table == t { &fk.to_table } else if fk.to_table == t { &fk.from_table } else { continue };
            if seen.insert(n.clone()) {
                prev.insert(n.clone(), t.clone());
                queue.push_back(n.clone());
            }
        }
    }
    let mut path = Vec::new();
    let mut cur = prev.get(to).cloned();
    while let Some(c) = cur {
        if c == from {
            break;
        }
        path.push(c.clone());
        cur = prev.get(&c).cloned();
    }
    path
}

#[test]
fn closure_bridges_along_shortest_path() {
    let catalog = chain_catalog();
    let linked = enforce_closure(&subset(&[("A", "id"), ("C", "x")], &[]), &catalog);
    let interior = bfs_interior(&catalog, "A", "C");
    assert_eq!(interior, ["B"]);
    assert!(linked.subset.tables.contains("B"));
    assert!(!linked.subset.tables.contains("D"));
    assert_eq!(linked.provenance("B", None), Some(&BTreeSet::from([Provenance::Closure])));
    for c in [("A", "b_id"), ("B", "id"), ("B", "c_id"), ("C", "id")] {
        assert!(linked.subset.contains_column(c.0, c.1), "{c:?}");
    }
    assert!(linked.connected);
}

#[test]
fn closure_of_single_table_only_adds_pk() {
    let catalog = chain_catalog();
    let linked = enforce_closure(&subset(&[("C", "x")], &[]), &catalog);
    assert_eq!(linked.subset, subset(&[("C", "x"), ("C", "id")], &[]));
    assert!(linked.connected);
}

#[test]
fn closure_reports_partition_when_catalog_is_disconnected() {
    let catalog = tiny();
    let linked = enforce_closure(&subset(&[("t", "a"), ("t2", "b")], &[]), &catalog);
    assert!(!linked.connected);
    assert_eq!(linked.components, vec![vec!["t".to_string()], vec!["t2".to_string()]]);
}

#[test]
fn robust_link_composes_union_and_closure() {
    let catalog = tiny();
    let values = RetrievedValuesMap::default();
    let gw = gateway(vec![
        ScriptRule::new(templates::DIRECT_LINKING, &[r#"<result><table table_name="t1"><column column_name="a"/></table></result>"#]),
        ScriptRule::new(templates::ICL, &["<result>SELECT T1.a, T2.b FROM t1 AS T1, t2 AS T2</result>"]),
    ]);
    let ledger = TokenLedger::new();
    let cfg = LinkConfig { sampling: one_sample(), fewshot_n: 0, ..LinkConfig::default() };
    let out = robust_link(&inputs("q", &catalog, &values), &FewShotStore::default(), &gw, &ledger, cfg).unwrap();
    // oracle: union_schemas then enforce_closure
    let (u, _) = union_schemas(&[
        (Provenance::Direct, &subset(&[("t1", "a")], &[])),
        (Provenance::Reversed, &subset(&[("t1", "a"), ("t2", "b")], &[])),
        (Provenance::Value, &SchemaSubset::new()),
    ]);
    assert_eq!(out.linked.subset, enforce_closure(&u, &catalog).subset);
    assert_eq!(out.linked.provenance("t1", Some("a")), Some(&BTreeSet::from([Provenance::Direct, Provenance::Reversed])));
    assert_eq!(out.linked.provenance("t2", Some("id")), Some(&BTreeSet::from([Provenance::Closure])));
    assert_eq!(out.strategies.len(), 3);
    assert_eq!(out.strategies[0].tokens.calls, 1);
    assert_eq!(ledger.call_count(), 2);
}

#[test]
fn value_linking_recovers_a_column_both_llm_linkers_miss() {
    let catalog = financial();
    let values = values_with(&[("trans", "k_symbol", "SIPO", 1.0), ("district", "A2", "Pisek", 1.0)]);
    let gw = gateway(vec![
        ScriptRule::new(
            templates::DIRECT_LINKING,
            &[r#"<result><table table_name="account"><column column_name="account_id"/></table><table table_name="district"><column column_name="A2"/></table></result>"#],
        ),
        ScriptRule::new(
            templates::ICL,
            &["<result>SELECT T1.account_id FROM account AS T1 JOIN district AS T2 ON T1.district_id = T2.district_id WHERE T2.A2 = 'Pisek'</result>"],
        ),
    ]);
    let cfg = LinkConfig { sampling: one_sample(), fewshot_n: 0, ..LinkConfig::default() };
    let out = robust_link(&inputs("q", &catalog, &values), &FewShotStore::default(), &gw, &TokenLedger::new(), cfg).unwrap();
    assert!(out.linked.subset.contains_column("trans", "k_symbol"));
    assert_eq!(out.linked.provenance("trans", Some("k_symbol")), Some(&BTreeSet::from([Provenance::Value])));
    assert!(out.linked.connected);
}

#[test]
fn robust_link_degrades_and_fails_when_everything_is_empty() {
    let catalog = tiny();
    let values = values_with(&[("t", "a", "v", 0.999)]);
    let gw = gateway(vec![ScriptRule::new("*", &["x"]).failing(ScriptedFailure::Fatal)]);
    let cfg = LinkConfig { sampling: one_sample(), fewshot_n: 0, ..LinkConfig::default() };
    let out = robust_link(&inputs("q", &catalog, &values), &FewShotStore::default(), &gw, &TokenLedger::new(), cfg).unwrap();
    assert!(out.linked.subset.contains_column("t", "a"));
    assert_eq!(out.warnings.len(), 2);
    let empty = RetrievedValuesMap::default();
    let r = robust_link(&inputs("q", &catalog, &empty), &FewShotStore::default(), &gw, &TokenLedger::new(), cfg);
    assert!(matches!(r, Err(LinkError::AllLinkersFailed(_))));
}

/// Random catalog: a forest over `n` tables plus extra edges; `parents[i]` links table i to an earlier table.
pub(crate) fn random_catalog(n: usize, parents: &[Option<usize>], extra: &[(usize, usize)]) -> SchemaCatalog {
    let mut b = CatalogBuilder::new();
    let mut fks = Vec::new();
    for i in 0..n {
        let mut cols: Vec<(String, &str)> = vec![("id".into(), "INTEGER"), ("v".into(), "TEXT")];
        if i > 0 {
            if let Some(p) = parents[i - 1] {
                cols.push((format!("p{p}"), "INTEGER"));
                fks.push((i, format!("p{p}"), p));
            }
        }
        for (k, (from, to)) in extra.iter().enumerate() {
            if *from == i && from != to && *to < n {
                cols.push((format!("x{k}"), "INTEGER"));
                fks.push((i, format!("x{k}"), *to));
            }
        }
        let refs: Vec<(&str, &str)> = cols.iter().map(|(c, t)| (c.as_str(), *t)).collect();
        b = b.table(&format!("t{i}"), &refs).primary_key(&format!("t{i}"), &["id"]);
    }
    for (from, col, to) in fks {
        b = b.foreign_key((&format!("t{from}"), &col), (&format!("t{to}"), "id"));
    }
    b.build()
}

/// Union-find over the undirected FK graph.
pub(crate) fn catalog_component_of(catalog: &SchemaCatalog) -> BTreeMap<String, String> {
    let mut parent: BTreeMap<String, String> = catalog.tables.iter().map(|t| (t.name.clone(), t.name.clone())).collect();
    fn root(p: &BTreeMap<String, String>, x: &str) -> String {
        let mut x = x.to_string();
        while p[&x] != x {
            x = p[&x].clone();
        }
        x
    }
    for fk in &catalog.foreign_keys {
        let (a, b) = (root(&parent, &fk.from_table), root(&parent, &fk.to_table));
        if a != b {
            parent.insert(a, b);
        }
    }
    let names: Vec<String> = parent.keys().cloned().collect();
    names.into_iter().map(|n| (n.clone(), root(&parent, &n))).collect()
}

fn arb_case() -> impl Strategy<Value = (SchemaCatalog, SchemaSubset)> {
    (1usize..=8)
        .prop_flat_map(|n| {
            (
                Just(n),
                proptest::collection::vec(proptest::option::weighted(0.85, 0usize..8), n.saturating_sub(1)),
                proptest::collection::vec((0usize..8, 0usize..8), 0..3),
                proptest::collection::vec((0usize..8, any::<bool>()), 1..6),
            )
        })
        .prop_map(|(n, parents, extra, picks)| {
            let parents: Vec<Option<usize>> = parents.iter().enumerate().map(|(i, p)| p.map(|p| p % (i + 1))).collect();
            let catalog = random_catalog(n, &parents, &extra);
            let mut s = SchemaSubset::new();
            for (t, with_col) in picks {
                let name = format!("t{}", t % n);
                if with_col {
                    s.insert_column(&name, "v");
                } else {
                    s.insert_table(&name);
                }
            }
            (catalog, s)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closure_properties((catalog, union) in arb_case()) {
        let linked = enforce_closure(&union, &catalog);
        prop_assert!(union.is_subset_of(&linked.subset));
        prop_assert!(linked.subset.is_well_formed());
        let again = enforce_closure(&linked.subset, &catalog);
        prop_assert_eq!(&again.subset, &linked.subset);
        prop_assert_eq!(again.connected, linked.connected);
        prop_assert!(again.added_by.is_empty());
        let comp = catalog_component_of(&catalog);
        let roots: BTreeSet<&String> = union.tables.iter().map(|t| &comp[t]).collect();
        prop_assert_eq!(linked.connected, roots.len() <= 1);
        for t in &linked.subset.tables {
            if !union.tables.contains(t) {
                prop_assert_eq!(linked.provenance(t, None), Some(&BTreeSet::from([Provenance::Closure])));
            }
        }
        for (t, c) in &linked.subset.columns {
            if !union.columns.contains(&(t.clone(), c.clone())) {
                prop_assert_eq!(linked.provenance(t, Some(c)), Some(&BTreeSet::from([Provenance::Closure])));
            }
        }
    }
}

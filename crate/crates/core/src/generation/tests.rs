use super::*;
use crate::catalog::CatalogBuilder;
use crate::llm::{ScriptRule, ScriptedFailure};
use crate::sql_ast::SchemaSubset;
use crate::testutil::{financial_db, gateway};
use crate::value_index::{Embedder, ScoredValue, TrigramEmbedder};

fn sipo_values() -> RetrievedValuesMap {
    let mut m = RetrievedValuesMap::default();
    m.insert("trans", "k_symbol", vec![ScoredValue { value: "SIPO".into(), score: 1.0 }]);
    m
}

#[test]
fn renders_value_examples_on_their_column_only() {
    let dir = tempfile::tempdir().unwrap();
    let (_, catalog) = financial_db(dir.path());
    let mut subset = SchemaSubset::new();
    subset.insert_column("trans", "k_symbol");
    subset.insert_column("trans", "amount");
    let ctx = render_schema_context(&subset, &catalog, &sipo_values());
    assert_eq!(ctx.text.matches("Value Examples: ['SIPO']").count(), 1);
    let line = ctx.text.lines().find(|l| l.contains("Value Examples")).unwrap();
    assert!(line.trim_start().starts_with("k_symbol TEXT"));
    assert!(!ctx.text.contains("account"));
    assert!(ctx.text.contains("Total count: 6, Distinct count: 2"));
}

#[test]
fn full_catalog_rendering_covers_every_table_and_is_larger() {
    let dir = tempfile::tempdir().unwrap();
    let (_, catalog) = financial_db(dir.path());
    let full = render_schema_context(&full_subset(&catalog), &catalog, &sipo_values());
    for t in ["district", "account", "trans"] {
        assert!(full.text.contains(&format!("CREATE TABLE {t} (")), "{t}");
    }
    assert!(full.text.contains("FOREIGN KEY (district_id) REFERENCES district(district_id)"));
    assert!(full.text.contains("account_id INTEGER PRIMARY KEY"));
    let mut part = full_subset(&catalog);
    part.tables.remove("district");
    part.columns.retain(|(t, _)| t != "district");
    let smaller = render_schema_context(&part, &catalog, &sipo_values());
    assert!(smaller.tokens() < full.tokens());
    assert!(!smaller.text.contains("REFERENCES district"));
}

#[test]
fn quotes_identifiers_that_need_it() {
    let catalog = CatalogBuilder::new().table("order items", &[("order id", "INTEGER"), ("qty", "INTEGER")]).build();
    let ctx = render_schema_context(&full_subset(&catalog), &catalog, &RetrievedValuesMap::default());
    assert!(ctx.text.starts_with("CREATE TABLE `order items` ("));
    assert!(ctx.text.contains("`order id` INTEGER"));
}

#[test]
fn python_repr_matches_python() {
    assert_eq!(python_repr("SIPO"), "'SIPO'");
    assert_eq!(python_repr("it's"), "\"it's\"");
    assert_eq!(python_repr("a'b\"c"), "'a\\'b\"c'");
    assert_eq!(python_list(&["a", "b"]), "['a', 'b']");
    assert_eq!(python_list(&[]), "[]");
}

#[test]
fn masking_replaces_schema_names_and_literals() {
    let mut vocab = MaskVocabulary::default();
    vocab.add_table("account");
    vocab.add_column("k_symbol");
    vocab.add_column("district");
    vocab.add_value("Pisek");
    let m = mask_question("How many account have k symbol 'SIPO' in Pisek district after 1995?", &vocab);
    assert_eq!(m, "How many <tab> have <col> <val> in <val> <col> after <val>?");
}

#[test]
fn examples_mask_with_their_own_sql() {
    let store = FewShotStore::from_pairs([(
        "How many singers are from France?",
        "SELECT COUNT(*) FROM singer WHERE country = 'France'",
    )]);
    assert_eq!(store.examples()[0].masked_question, "How many <tab> are from <val>?");
}

#[test]
fn fewshot_retrieval_orders_by_masked_similarity() {
    let store = FewShotStore::from_jsonl(
        r#"{"question": "List the names of all singers", "sql": "SELECT name FROM singer", "masked_question": "list the <col> of all <tab>"}
{"question": "How many heads in department", "sql": "SELECT COUNT(head) FROM department", "masked_question": "how many <col> in <tab>"}
{"question": "What is the oldest car", "sql": "SELECT * FROM cars ORDER BY age DESC LIMIT 1", "masked_question": "what is the oldest <tab>"}
"#,
    )
    .unwrap();
    assert!(store.retrieve("how many <col> in <tab>", 0).is_empty());
    let target = "how many <col> in <tab> for <val>";
    // oracle: cosine of the deterministic embedder, scanned by hand
    let e = TrigramEmbedder::default();
    let q = e.embed(&[target.to_string()]).unwrap().remove(0);
    let mut scan: Vec<(usize, f64)> = store
        .examples()
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let v = e.embed_one(&ex.masked_question);
            (i, v.iter().zip(&q).map(|(a, b)| *a as f64 * *b as f64).sum())
        })
        .collect();
    scan.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let got = store.retrieve(target, 3);
    assert_eq!(got[0].masked_question, "how many <col> in <tab>");
    let expected: Vec<&str> = scan.iter().map(|(i, _)| store.examples()[*i].masked_question.as_str()).collect();
    let got: Vec<&str> = got.iter().map(|x| x.masked_question.as_str()).collect();
    assert_eq!(got, expected);
}

#[test]
fn self_similarity_ranks_first_and_ties_keep_order() {
    let store = FewShotStore::from_pairs([
        ("Show all ids", "SELECT id FROM t"),
        ("Count the rows of each group", "SELECT g, COUNT(*) FROM t GROUP BY g"),
        ("Count the rows of each group", "SELECT g, COUNT(*) FROM u GROUP BY g"),
    ]);
    let masked = store.examples()[1].masked_question.clone();
    let got = store.retrieve(&masked, 2);
    assert_eq!(got[0].sql, store.examples()[1].sql);
    assert_eq!(got[1].sql, store.examples()[2].sql);
    assert!(FewShotStore::default().retrieve("x", 3).is_empty());
}

#[test]
fn sql_extraction_rules() {
    assert_eq!(extract_sql("<reasoning>r</reasoning><result>SELECT 1</result>").unwrap(), "SELECT 1");
    assert_eq!(extract_sql("<result>SELECT 1</result> then <result>\n SELECT 2 ;; \n</result>").unwrap(), "SELECT 2");
    assert_eq!(extract_sql("<result>SELECT a FROM t WHERE a &lt; 3</result>"), Err(SqlExtractError::XmlEntities));
    assert_eq!(extract_sql("<result> ; </result>"), Err(SqlExtractError::Empty));
    assert_eq!(extract_sql("SELECT 1"), Err(SqlExtractError::Missing));
    assert_eq!(extract_sql("<result>SELECT 'a & b'</result>").unwrap(), "SELECT 'a & b'");
}

fn inputs_fixture() -> (RenderedSchemaContext, Vec<FewShotExample>) {
    (RenderedSchemaContext { text: "CREATE TABLE t (a INTEGER)".into() }, vec![])
}

#[test]
fn generate_passes_samples_through() {
    let gw = gateway(vec![ScriptRule::new(templates::SKELETON, &["<reasoning>think</reasoning><result>SELECT 1</result>"])]);
    let ledger = TokenLedger::new();
    let (ctx, ex) = inputs_fixture();
    let inputs = GenerationInputs { question: "q", hint: "", context: &ctx, examples: &ex };
    let out = generate(GeneratorKind::Skeleton, &inputs, &gw, &ledger, SamplingConfig::default(), Stage::Generation).unwrap();
    assert_eq!(out.len(), 8);
    assert!(out.iter().all(|c| c.sql == "SELECT 1" && c.generator == GeneratorKind::Skeleton));
    assert_eq!(out.iter().map(|c| c.sample_index).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
    assert_eq!(ledger.call_count(), 8);
}

#[test]
fn generate_fails_only_when_nothing_survives() {
    let gw = gateway(vec![ScriptRule::new(templates::SKELETON, &["<result>a &gt; b</result>", "no tags"])]);
    let ledger = TokenLedger::new();
    let (ctx, ex) = inputs_fixture();
    let inputs = GenerationInputs { question: "q", hint: "", context: &ctx, examples: &ex };
    let r = generate(GeneratorKind::Skeleton, &inputs, &gw, &ledger, SamplingConfig { budget: 4, temperature: 0.7 }, Stage::Generation);
    assert!(matches!(r, Err(GenerationError::NoSql { generator: GeneratorKind::Skeleton })));
}

#[test]
fn icl_prompt_carries_examples_and_hint() {
    let ex = vec![FewShotExample { question: "Q1".into(), masked_question: "q1".into(), sql: "SELECT 9".into() }];
    let ctx = RenderedSchemaContext { text: "schema".into() };
    let inputs = GenerationInputs { question: "What?", hint: "use t", context: &ctx, examples: &ex };
    let req = generator_request(GeneratorKind::Icl, &inputs, SamplingConfig::default());
    let gw = gateway(vec![]);
    let prompt = gw.render(&req).unwrap();
    assert!(prompt.contains("### Example 1\nQuestion: Q1\nSQL: SELECT 9"));
    assert!(prompt.contains("What? use t"));
}

fn linked_for(catalog: &SchemaCatalog) -> LinkedSchema {
    LinkedSchema { subset: full_subset(catalog), connected: true, ..Default::default() }
}

fn three_rules(skel: &[&str], icl: &[&str], dc: &[&str]) -> Vec<ScriptRule> {
    vec![
        ScriptRule::new(templates::SKELETON, skel),
        ScriptRule::new(templates::ICL, icl),
        ScriptRule::new(templates::DIVIDE_CONQUER, dc),
    ]
}

fn run_nversion(gw: &Gateway, budget: usize, generators: &[GeneratorKind]) -> Result<NVersionOutput, GenerationError> {
    let dir = tempfile::tempdir().unwrap();
    let (_, catalog) = financial_db(dir.path());
    nversion_generate(
        "How many SIPO transactions?",
        "",
        &linked_for(&catalog),
        &catalog,
        &sipo_values(),
        &FewShotStore::default(),
        3,
        gw,
        &TokenLedger::new(),
        SamplingConfig { budget, temperature: 0.7 },
        generators,
    )
}

#[test]
fn nversion_concatenates_in_generator_order() {
    let gw = gateway(three_rules(&["<result>SELECT 1</result>"], &["<result>SELECT 2</result>"], &["<result>SELECT 3</result>"]));
    let out = run_nversion(&gw, 1, &GeneratorKind::ALL).unwrap();
    let got: Vec<(&str, GeneratorKind)> = out.candidates.iter().map(|c| (c.sql.as_str(), c.generator)).collect();
    assert_eq!(
        got,
        [("SELECT 1", GeneratorKind::Skeleton), ("SELECT 2", GeneratorKind::Icl), ("SELECT 3", GeneratorKind::DivideConquer)]
    );
    assert!(out.context.text.contains("Value Examples: ['SIPO']"));
}

#[test]
fn nversion_degrades_when_a_generator_fails() {
    let mut rules = three_rules(&["<result>SELECT 1</result>"], &["x"], &["<result>SELECT 3</result>"]);
    rules[1] = ScriptRule::new(templates::ICL, &["x"]).failing(ScriptedFailure::Fatal);
    let out = run_nversion(&gateway(rules), 2, &GeneratorKind::ALL).unwrap();
    assert_eq!(out.candidates.len(), 4);
    assert!(out.warnings.iter().any(|w| w.starts_with("icl generator")));
    let all_fail = vec![ScriptRule::new("*", &["x"]).failing(ScriptedFailure::Fatal)];
    assert!(matches!(run_nversion(&gateway(all_fail), 2, &GeneratorKind::ALL), Err(GenerationError::AllGeneratorsFailed(_))));
}

#[test]
fn nversion_counts_after_malformed_filtering() {
    let gw = gateway(three_rules(
        &["<result>SELECT 1</result>", "garbage"],
        &["<result>SELECT 2</result>"],
        &["<result>SELECT 3</result>", "<result>a &lt; b</result>", "x", "<result></result>"],
    ));
    let out = run_nversion(&gw, 8, &GeneratorKind::ALL).unwrap();
    // oracle: skeleton keeps samples 0,2,4,6; icl all 8; divide-and-conquer keeps 0 and 4
    assert_eq!(out.candidates.len(), 4 + 8 + 2);
    assert!(out.candidates.len() <= 24);
    let dc: Vec<usize> =
        out.candidates.iter().filter(|c| c.generator == GeneratorKind::DivideConquer).map(|c| c.sample_index).collect();
    assert_eq!(dc, [0, 4]);
}

#[test]
fn generators_are_independent() {
    let gw = gateway(three_rules(&["<result>SELECT 1</result>", "<result>SELECT 11</result>"], &["<result>SELECT 2</result>"], &["<result>SELECT 3</result>"]));
    let all = run_nversion(&gw, 3, &GeneratorKind::ALL).unwrap();
    let without_icl = run_nversion(&gw, 3, &[GeneratorKind::Skeleton, GeneratorKind::DivideConquer]).unwrap();
    let keep = |o: &NVersionOutput| -> Vec<SqlCandidate> {
        o.candidates.iter().filter(|c| c.generator != GeneratorKind::Icl).cloned().collect()
    };
    assert_eq!(keep(&all), keep(&without_icl));
}

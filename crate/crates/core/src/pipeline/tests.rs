use std::path::PathBuf;

use super::*;
use crate::llm::{ScriptRule, Stage};
use crate::selection::SelectionPath;
use crate::testutil::gateway;

fn bench_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/bench")
}

fn fixture_pipeline() -> Pipeline {
    Pipeline::new(PipelineConfig::from_file(&bench_dir().join("config.toml")).unwrap()).unwrap()
}

fn fixture_cases() -> Vec<BenchCase> {
    ingest_dataset(&bench_dir().join("dev.json"), DatasetFormat::Bird, &bench_dir().join("databases")).unwrap()
}

#[test]
fn defaults_follow_the_reference_settings() {
    let c = PipelineConfig::default();
    assert_eq!((c.top_k_values, c.theta_val, c.theta_conf), (5, 0.98, 0.6));
    assert_eq!((c.adjudication_k, c.budget, c.temperature), (2, 8, 0.7));
    assert!(c.validate().is_ok());
}

#[test]
fn config_validation() {
    let bad = PipelineConfig { theta_conf: 1.5, ..PipelineConfig::default() };
    assert!(matches!(bad.validate(), Err(ConfigError::Invalid(_))));
    let even = PipelineConfig { vote_samples: 2, ..PipelineConfig::default() };
    assert!(even.validate().is_err());
    let zero = PipelineConfig { budget: 0, ..PipelineConfig::default() };
    assert!(zero.validate().is_err());
    assert!(toml::from_str::<PipelineConfig>("no_such_key = 1").is_err());
}

#[test]
fn config_file_paths_resolve_relative_to_the_file() {
    let c = PipelineConfig::from_file(&bench_dir().join("config.toml")).unwrap();
    assert_eq!(c.fewshot_path.unwrap(), bench_dir().join("fewshot.jsonl"));
    assert_eq!(c.backend.script.unwrap(), bench_dir().join("transcripts"));
    assert_eq!(c.theta_conf, 0.6);
}

#[test]
fn dataset_formats() {
    let root = bench_dir().join("databases");
    let bird = r#"[{"question_id": 7, "db_id": "financial", "question": "q", "evidence": "e", "SQL": "SELECT 1"}]"#;
    let c = &parse_dataset(bird, DatasetFormat::Bird, &root).unwrap()[0];
    assert_eq!((c.question_id.as_str(), c.hint.as_str(), c.gold_sql.as_str()), ("7", "e", "SELECT 1"));
    let spider = r#"[{"db_id": "concert_singer", "question": "q", "query": "SELECT 2"}]"#;
    let c = &parse_dataset(spider, DatasetFormat::Spider, &root).unwrap()[0];
    assert_eq!((c.question_id.as_str(), c.hint.as_str()), ("0", ""));
    let unknown = r#"[{"db_id": "financial", "question": "q", "query": "x"}, {"db_id": "nope", "question": "q", "query": "x"}]"#;
    assert!(matches!(parse_dataset(unknown, DatasetFormat::Spider, &root), Err(DatasetError::Format { index: 1, .. })));
    assert!("bird".parse::<DatasetFormat>().is_ok() && "x".parse::<DatasetFormat>().is_err());
}

#[test]
fn unanimous_question_takes_the_shortcut() {
    let p = fixture_pipeline();
    let case = &fixture_cases()[0];
    let dbc = p.open_database(&case.db_path, None).unwrap();
    let ledger = TokenLedger::new();
    let run = p.run_question(&case.question, &case.hint, &dbc, &ledger).unwrap();
    assert_eq!(run.final_sql(), case.gold_sql);
    assert_eq!(run.decision.path, SelectionPath::Shortcut);
    assert_eq!(run.decision.confidence[0], 1.0);
    assert_eq!(ledger.stage_totals()[&Stage::Selection].calls, 0);
    assert!(run.keywords.contains(&"SIPO".to_string()));
    assert!(run.link.linked.subset.contains_column("trans", "k_symbol"));
}

#[test]
fn generation_outage_fails_only_that_case() {
    let mut cases = fixture_cases();
    cases.truncate(2);
    let mut script = load_script(&bench_dir().join("transcripts").join("f01.json")).unwrap();
    let f02 = std::fs::read_to_string(bench_dir().join("transcripts").join("f02.json")).unwrap();
    let mut f02: crate::llm::Script = serde_json::from_str(&f02).unwrap();
    f02.rules.retain(|r| r.template == "keyword_extraction" || r.template == "direct_linking");
    script.extend(crate::llm::ScriptedBackend::from_json(&serde_json::to_string(&f02).unwrap()).unwrap());
    let mut config = PipelineConfig::from_file(&bench_dir().join("config.toml")).unwrap();
    config.budget = 2;
    let gw = crate::llm::Gateway::new(std::sync::Arc::new(script), crate::llm::TemplateSet::builtin(), crate::llm::GatewayConfig {
        backoff: std::time::Duration::ZERO,
        ..Default::default()
    });
    let p = Pipeline::with_parts(config, gw, std::sync::Arc::new(crate::value_index::TrigramEmbedder::default()), FewShotStore::default());
    let out = bench(&cases, &p);
    assert_eq!(out.report.cases[0].status, CaseStatus::Ok);
    assert_eq!(out.report.cases[1].status, CaseStatus::Failed);
    assert_eq!(out.report.cases[1].failed_stage.as_deref(), Some("generation"));
    assert_eq!(out.report.aggregates.failed, 1);
    assert_eq!(out.report.aggregates.ex, Some(50.0));
}

#[test]
fn empty_dataset_reports_na() {
    let p = Pipeline::with_parts(
        PipelineConfig::default(),
        gateway(vec![ScriptRule::new("*", &["x"])]),
        std::sync::Arc::new(crate::value_index::TrigramEmbedder::default()),
        FewShotStore::default(),
    );
    let out = bench(&[], &p);
    assert_eq!(out.report.aggregates.ex, None);
    let table = render_table(&out.report);
    assert!(table.contains("EX: n/a"));
    assert!(table.contains("shortcut rate: n/a"));
}

#[test]
fn missing_database_marks_case_failed() {
    let p = fixture_pipeline();
    let mut case = fixture_cases().remove(0);
    case.db_path = PathBuf::from("/nonexistent/x.sqlite");
    let out = bench(&[case], &p);
    assert_eq!(out.report.cases[0].failed_stage.as_deref(), Some("database"));
    assert_eq!(out.ledger.call_count(), 0);
}

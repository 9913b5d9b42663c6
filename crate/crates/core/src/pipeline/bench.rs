use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BenchCase, DatabaseContext, Pipeline, PipelineError, QuestionRun};
use crate::catalog::DatabaseHandle;
use crate::executor::{execute, results_equivalent, ExecStatus, ExecutionOutcome};
use crate::llm::{CallRecord, Stage, StageTotals, TokenLedger};
use crate::selection::{rescore_recorded, SelectionPath};
use crate::sql_ast::parse_sql;
use crate::sync::parallel_map;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub question_id: String,
    pub db_id: String,
    pub status: CaseStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub final_sql: Option<String>,
    pub final_status: Option<ExecStatus>,
    pub gold_status: Option<ExecStatus>,
    pub order_sensitive: bool,
    pub ex_correct: bool,
    pub ub_correct: bool,
    pub path: Option<SelectionPath>,
    pub final_rank: Option<usize>,
    /// Conf by cluster rank.
    pub confidence: Vec<f64>,
    /// Whether each cluster's result matches gold, by rank.
    pub cluster_correct: Vec<bool>,
    pub candidates: usize,
    pub revisions: usize,
    pub tokens: BTreeMap<Stage, StageTotals>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub total: usize,
    pub completed: usize,
    pub failed: usize,
    pub ex_correct: usize,
    pub ub_correct: usize,
    /// Percentages; `None` for an empty dataset.
    pub ex: Option<f64>,
    pub ub_ex: Option<f64>,
    pub shortcut_rate: Option<f64>,
    pub tokens_by_stage: BTreeMap<Stage, StageTotals>,
    pub tokens_total: StageTotals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSettings {
    pub theta_val: f64,
    pub theta_conf: f64,
    pub top_k_values: usize,
    pub adjudication_k: usize,
    pub vote_samples: usize,
    pub budget: usize,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: u32,
    pub settings: ReportSettings,
    pub cases: Vec<CaseReport>,
    pub aggregates: Aggregates,
}

/// Per-case audit trail written next to the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseArtifact {
    pub case: BenchCase,
    pub gold: Option<ExecutionOutcome>,
    pub run: Option<QuestionRun>,
    pub calls: Vec<CallRecord>,
}

pub struct BenchOutcome {
    pub report: BenchReport,
    pub artifacts: Vec<CaseArtifact>,
    /// Every backend call of the run.
    pub ledger: TokenLedger,
    pub timings: Vec<(String, Duration)>,
}

fn percent(n: usize, d: usize) -> Option<f64> {
    (d > 0).then(|| 100.0 * n as f64 / d as f64)
}

/// EX compares in order only when the gold query sorts at top level.
fn gold_is_ordered(gold_sql: &str) -> bool {
    parse_sql(gold_sql).map(|t| !t.query.order_by.is_empty()).unwrap_or(false)
}

fn matches_gold(outcome: &ExecutionOutcome, gold: &ExecutionOutcome, ordered: bool) -> bool {
    match (&outcome.result, &gold.result) {
        (Some(a), Some(b)) if outcome.is_ok() && gold.is_ok() => results_equivalent(a, b, ordered),
        _ => false,
    }
}

fn failed_case(case: &BenchCase, stage: &str, error: String, tokens: BTreeMap<Stage, StageTotals>, gold: Option<&ExecutionOutcome>) -> CaseReport {
    CaseReport {
        question_id: case.question_id.clone(),
        db_id: case.db_id.clone(),
        status: CaseStatus::Failed,
        failed_stage: Some(stage.to_string()),
        error: Some(error),
        final_sql: None,
        final_status: None,
        gold_status: gold.map(|g| g.status),
        order_sensitive: gold_is_ordered(&case.gold_sql),
        ex_correct: false,
        ub_correct: false,
        path: None,
        final_rank: None,
        confidence: vec![],
        cluster_correct: vec![],
        candidates: 0,
        revisions: 0,
        tokens,
        warnings: vec![],
    }
}

fn evaluate(case: &BenchCase, run: &QuestionRun, gold: &ExecutionOutcome, tokens: BTreeMap<Stage, StageTotals>) -> CaseReport {
    let ordered = gold_is_ordered(&case.gold_sql);
    let d = &run.decision;
    let final_idx = run.chains.iter().position(|c| c.candidate == d.final_candidate).expect("final candidate comes from the pool");
    let final_outcome = &run.outcomes[final_idx];
    let cluster_correct = d
        .clusters
        .iter()
        .map(|c| {
            let idx = run.chains.iter().position(|ch| ch.candidate == *c.representative()).expect("cluster member from the pool");
            matches_gold(&run.outcomes[idx], gold, ordered)
        })
        .collect();
    CaseReport {
        question_id: case.question_id.clone(),
        db_id: case.db_id.clone(),
        status: CaseStatus::Ok,
        failed_stage: None,
        error: None,
        final_sql: Some(d.final_sql().to_string()),
        final_status: Some(final_outcome.status),
        gold_status: Some(gold.status),
        order_sensitive: ordered,
        ex_correct: matches_gold(final_outcome, gold, ordered),
        ub_correct: run.outcomes.iter().any(|o| matches_gold(o, gold, ordered)),
        path: Some(d.path),
        final_rank: Some(d.final_rank),
        confidence: d.confidence.clone(),
        cluster_correct,
        candidates: run.chains.len(),
        revisions: run.revision_count(),
        tokens,
        warnings: run.warnings.clone(),
    }
}

fn aggregate(cases: &[CaseReport], ledger: &TokenLedger) -> Aggregates {
    let total = cases.len();
    let completed = cases.iter().filter(|c| c.status == CaseStatus::Ok).count();
    let ex_correct = cases.iter().filter(|c| c.ex_correct).count();
    let ub_correct = cases.iter().filter(|c| c.ub_correct).count();
    let shortcuts = cases.iter().filter(|c| c.path == Some(SelectionPath::Shortcut)).count();
    Aggregates {
        total,
        completed,
        failed: total - completed,
        ex_correct,
        ub_correct,
        ex: percent(ex_correct, total),
        ub_ex: percent(ub_correct, total),
        shortcut_rate: percent(shortcuts, completed),
        tokens_by_stage: ledger.stage_totals(),
        tokens_total: ledger.total(),
    }
}

struct CaseResult {
    report: CaseReport,
    artifact: CaseArtifact,
    ledger: TokenLedger,
    elapsed: Duration,
}

fn run_case(pipeline: &Pipeline, case: &BenchCase, dbc: Result<&DatabaseContext, &String>) -> CaseResult {
    let start = Instant::now();
    let ledger = TokenLedger::new();
    let db = DatabaseHandle::new(&case.db_path);
    let gold = execute(&case.gold_sql, &db, pipeline.config.timeout());
    let (report, run) = match dbc {
        Err(e) => (failed_case(case, "database", e.clone(), ledger.stage_totals(), Some(&gold)), None),
        Ok(dbc) => match pipeline.run_question(&case.question, &case.hint, dbc, &ledger) {
            Ok(run) => (evaluate(case, &run, &gold, ledger.stage_totals()), Some(run)),
            Err(e) => {
                log::warn!("case {} failed at {}: {e}", case.question_id, e.stage());
                (failed_case(case, e.stage(), e.to_string(), ledger.stage_totals(), Some(&gold)), None)
            }
        },
    };
    let artifact = CaseArtifact { case: case.clone(), gold: Some(gold), run, calls: ledger.records() };
    CaseResult { report, artifact, ledger, elapsed: start.elapsed() }
}

/// Runs every case; per-case failures are recorded and the run continues.
pub fn bench(cases: &[BenchCase], pipeline: &Pipeline) -> BenchOutcome {
    let mut db_ids: Vec<(&str, &Path)> = cases.iter().map(|c| (c.db_id.as_str(), c.db_path.as_path())).collect();
    db_ids.sort();
    db_ids.dedup();
    let contexts: BTreeMap<&str, Result<DatabaseContext, String>> = db_ids
        .into_iter()
        .map(|(id, path)| {
            let dir = pipeline.index_dir_for(id);
            let ctx = pipeline.open_database(path, dir.as_deref()).map_err(|e: PipelineError| e.to_string());
            (id, ctx)
        })
        .collect();
    let results = parallel_map(cases, pipeline.config.case_parallelism, |case| {
        run_case(pipeline, case, contexts[case.db_id.as_str()].as_ref())
    });
    let ledger = TokenLedger::new();
    let mut reports = Vec::new();
    let mut artifacts = Vec::new();
    let mut timings = Vec::new();
    for r in results {
        ledger.absorb(r.ledger);
        timings.push((r.report.question_id.clone(), r.elapsed));
        reports.push(r.report);
        artifacts.push(r.artifact);
    }
    let c = &pipeline.config;
    let report = BenchReport {
        version: REPORT_VERSION,
        settings: ReportSettings {
            theta_val: c.theta_val,
            theta_conf: c.theta_conf,
            top_k_values: c.top_k_values,
            adjudication_k: c.adjudication_k,
            vote_samples: c.vote_samples,
            budget: c.budget,
            temperature: c.temperature,
        },
        aggregates: aggregate(&reports, &ledger),
        cases: reports,
    };
    BenchOutcome { report, artifacts, ledger, timings }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |p| format!("{p:.2}%"))
}

/// Human-readable summary table.
pub fn render_table(report: &BenchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:<20} {:<8} {:<12} {:>6} {:>4} {:>4}", "question", "db", "status", "path", "conf", "EX", "UB");
    for c in &report.cases {
        let path = match c.path {
            Some(SelectionPath::Shortcut) => "shortcut",
            Some(SelectionPath::FullReview) => "full_review",
            None => "-",
        };
        let conf = c.confidence.first().map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
        let status = match c.status {
            CaseStatus::Ok => "ok",
            CaseStatus::Failed => "failed",
        };
        let mark = |b: bool| if b { "1" } else { "0" };
        let _ = writeln!(
            out,
            "{:<12} {:<20} {:<8} {:<12} {:>6} {:>4} {:>4}",
            c.question_id,
            c.db_id,
            status,
            path,
            conf,
            mark(c.ex_correct),
            mark(c.ub_correct)
        );
    }
    let a = &report.aggregates;
    let _ = writeln!(out);
    let _ = writeln!(out, "cases: {} ({} completed, {} failed)", a.total, a.completed, a.failed);
    let _ = writeln!(out, "EX: {} ({}/{})", pct(a.ex), a.ex_correct, a.total);
    let _ = writeln!(out, "UB-EX: {} ({}/{})", pct(a.ub_ex), a.ub_correct, a.total);
    let _ = writeln!(out, "shortcut rate: {}", pct(a.shortcut_rate));
    for (stage, t) in &a.tokens_by_stage {
        let name = serde_json::to_value(stage).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let _ = writeln!(out, "tokens {:<16} calls {:>6} in {:>10} out {:>10}", name, t.calls, t.input_tokens, t.output_tokens);
    }
    let t = &a.tokens_total;
    let _ = writeln!(out, "tokens {:<16} calls {:>6} in {:>10} out {:>10}", "total", t.calls, t.input_tokens, t.output_tokens);
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    std::fs::write(path, text + "\n")
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// `report.json`, `report.txt`, `timings.json` and `artifacts/<question_id>.json` under `dir`.
pub fn write_bench(dir: &Path, outcome: &BenchOutcome) -> std::io::Result<()> {
    std::fs::create_dir_all(dir.join("artifacts"))?;
    write_json(&dir.join("report.json"), &outcome.report)?;
    std::fs::write(dir.join("report.txt"), render_table(&outcome.report))?;
    let timings: BTreeMap<&str, f64> = outcome.timings.iter().map(|(id, d)| (id.as_str(), d.as_secs_f64())).collect();
    write_json(&dir.join("timings.json"), &timings)?;
    for a in &outcome.artifacts {
        write_json(&dir.join("artifacts").join(format!("{}.json", file_stem(&a.case.question_id))), a)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub theta_conf: f64,
    /// Share of completed cases on the shortcut path, in percent.
    pub shortcut_rate: Option<f64>,
    /// EX over all cases; cases needing votes that were never recorded count as incorrect.
    pub ex: Option<f64>,
    /// Cases that would need adjudication but were recorded on the shortcut path.
    pub unresolved: usize,
}

/// Re-scores recorded decisions at each threshold without backend calls.
pub fn sweep(report: &BenchReport, thetas: &[f64]) -> Vec<SweepRow> {
    let done: Vec<&CaseReport> = report.cases.iter().filter(|c| c.status == CaseStatus::Ok).collect();
    thetas
        .iter()
        .map(|&theta| {
            let mut shortcuts = 0;
            let mut correct = 0;
            let mut unresolved = 0;
            for c in &done {
                let (path, rank) = (c.path.expect("completed case has a path"), c.final_rank.expect("completed case has a rank"));
                let r = rescore_recorded(c.confidence[0], path, rank, theta);
                if r.path == SelectionPath::Shortcut {
                    shortcuts += 1;
                }
                match r.final_rank {
                    Some(k) => correct += usize::from(c.cluster_correct[k - 1]),
                    None => unresolved += 1,
                }
            }
            SweepRow {
                theta_conf: theta,
                shortcut_rate: percent(shortcuts, done.len()),
                ex: percent(correct, report.cases.len()),
                unresolved,
            }
        })
        .collect()
}

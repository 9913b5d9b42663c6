//! Single-pass checker chain with LLM revision on failure.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::catalog::{quote_sql_ident, DatabaseHandle, SchemaCatalog};
use crate::executor::{execute, ExecStatus, ExecutionOutcome};
use crate::generation::{extract_sql, RenderedSchemaContext, Revision, SqlCandidate};
use crate::llm::{templates, Gateway, LlmRequest, Stage, TokenLedger};
use crate::sql_ast::{find, parse_sql, walk, Expr, Node, PatternKind, PatternMatch, SqlTree};

/// Checkers in chain order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckerId {
    Syntax,
    Join,
    OrderBy,
    Time,
    Select,
    Maxmin,
    Null,
    Result,
}

impl CheckerId {
    pub const CHAIN: [CheckerId; 8] = [
        CheckerId::Syntax,
        CheckerId::Join,
        CheckerId::OrderBy,
        CheckerId::Time,
        CheckerId::Select,
        CheckerId::Maxmin,
        CheckerId::Null,
        CheckerId::Result,
    ];

    pub fn id(self) -> &'static str {
        match self {
            CheckerId::Syntax => "syntax",
            CheckerId::Join => "join",
            CheckerId::OrderBy => "order_by",
            CheckerId::Time => "time",
            CheckerId::Select => "select",
            CheckerId::Maxmin => "maxmin",
            CheckerId::Null => "null",
            CheckerId::Result => "result",
        }
    }

    /// Syntax and result failures are repaired from execution feedback.
    pub fn uses_execution_revision(self) -> bool {
        matches!(self, CheckerId::Syntax | CheckerId::Result)
    }
}

impl fmt::Display for CheckerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CheckerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CheckerId::CHAIN.into_iter().find(|c| c.id() == s).ok_or_else(|| format!("unknown checker `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Patterns { matches: Vec<PatternMatch> },
    Execution { outcome: ExecutionOutcome },
    Engine { message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub checker: CheckerId,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub directive: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub evidence: Option<Evidence>,
    /// Text for `{RESULT}` in execution-based revision.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub feedback: Option<String>,
    /// Set when the checker could not run and passed by default.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

impl CheckReport {
    fn pass(checker: CheckerId) -> Self {
        CheckReport { checker, passed: true, directive: None, evidence: None, feedback: None, warning: None }
    }

    fn pass_with_warning(checker: CheckerId, warning: String) -> Self {
        CheckReport { warning: Some(warning), ..Self::pass(checker) }
    }

    fn fail(checker: CheckerId, message: &str, evidence: Evidence) -> Self {
        CheckReport {
            checker,
            passed: false,
            directive: Some(format!("[{checker}] {message}")),
            evidence: Some(evidence),
            feedback: None,
            warning: None,
        }
    }
}

/// Per-question context shared by every chain.
#[derive(Debug, Clone, Copy)]
pub struct RevisionContext<'a> {
    pub question: &'a str,
    pub hint: &'a str,
    pub schema: &'a RenderedSchemaContext,
    pub catalog: &'a SchemaCatalog,
    pub db: &'a DatabaseHandle,
    pub timeout: Duration,
}

fn parse_resolved(sql: &str, catalog: &SchemaCatalog) -> Option<SqlTree> {
    let mut tree = parse_sql(sql).ok()?;
    tree.resolve(catalog);
    Some(tree)
}

fn detail<'a>(m: &'a PatternMatch, key: &str) -> &'a str {
    m.details.get(key).map(String::as_str).unwrap_or("")
}

fn rule_message(checker: CheckerId, m: &PatternMatch) -> String {
    match m.kind {
        PatternKind::JoinNonstandard => {
            let reason = match detail(m, "reason") {
                "or" => "an OR",
                "in" => "an IN list",
                _ => "a non-equality comparison",
            };
            format!(
                "The JOIN condition `{}` uses {reason}. Join on equality between foreign-key columns (ON a.col = b.col) and move any other condition into WHERE.",
                detail(m, "condition")
            )
        }
        PatternKind::OrderbyAggregateLimit => format!(
            "ORDER BY sorts by the aggregate `{}` together with LIMIT {} but without GROUP BY. Group by the entity being ranked, or compute the aggregate in a subquery.",
            detail(m, "expression"),
            detail(m, "limit")
        ),
        PatternKind::StrftimeInvalidFormat => format!(
            "The STRFTIME format '{}' uses the unsupported specifier {}. Use valid SQLite specifiers such as %Y, %m, %d, %H, %M, %S.",
            detail(m, "format"),
            detail(m, "specifier")
        ),
        PatternKind::StrftimeNumericCompare => format!(
            "`{}` returns text but is compared with the number {}. Compare with a string literal such as '{}' or CAST the STRFTIME result to INTEGER.",
            detail(m, "call"),
            detail(m, "literal"),
            detail(m, "literal")
        ),
        PatternKind::SelectStar => {
            "The query selects all columns with `*`. Select only the columns the question asks for.".to_string()
        }
        PatternKind::MaxminSubquery => format!(
            "The filter on {} compares it with a {} subquery over {}. Rewrite it as {} to return the extreme row directly.",
            detail(m, "column"),
            detail(m, "function"),
            detail(m, "table"),
            detail(m, "suggestion")
        ),
        PatternKind::OrderbyColumn => format!("{checker} rule matched at {}", m.node_path),
    }
}

fn rule_check(checker: CheckerId, kinds: &[PatternKind], tree: Option<&SqlTree>) -> CheckReport {
    let Some(tree) = tree else { return CheckReport::pass(checker) };
    let matches: Vec<PatternMatch> = kinds.iter().flat_map(|k| find(tree, *k)).collect();
    if matches.is_empty() {
        return CheckReport::pass(checker);
    }
    let mut msgs: Vec<String> = Vec::new();
    for m in &matches {
        let msg = rule_message(checker, m);
        if !msgs.contains(&msg) {
            msgs.push(msg);
        }
    }
    CheckReport::fail(checker, &msgs.join(" "), Evidence::Patterns { matches })
}

fn syntax_check(sql: &str, tree: Option<&SqlTree>, ctx: &RevisionContext<'_>) -> CheckReport {
    match crate::executor::prepare_check(sql, ctx.db) {
        Ok(()) => match tree {
            Some(_) => CheckReport::pass(CheckerId::Syntax),
            None => CheckReport::pass_with_warning(
                CheckerId::Syntax,
                "the engine accepts the query but the local parser does not; rule checks skipped".into(),
            ),
        },
        Err(msg) if msg.contains("database file not found") || msg.contains("unable to open") => match tree {
            Some(_) => CheckReport::pass_with_warning(CheckerId::Syntax, format!("engine unavailable: {msg}")),
            None => {
                let err = parse_sql(sql).err().map(|e| e.to_string()).unwrap_or_default();
                let mut r = CheckReport::fail(
                    CheckerId::Syntax,
                    &format!("The query does not parse: {err}. Fix the SQL syntax."),
                    Evidence::Engine { message: err.clone() },
                );
                r.feedback = Some(format!("Error: {err}"));
                r
            }
        },
        Err(msg) => {
            let mut r = CheckReport::fail(
                CheckerId::Syntax,
                &format!("The query fails to compile: {msg}. Fix the SQL syntax."),
                Evidence::Engine { message: msg.clone() },
            );
            r.feedback = Some(format!("Error: {msg}"));
            r
        }
    }
}

fn has_not_null_guard(tree: &SqlTree, table: &str, column: &str, written: &str) -> bool {
    let mut found = false;
    walk(tree, &mut |v| {
        if let Node::Expr(Expr::IsNull { negated: true, expr }) = v.node {
            if let Expr::Column(c) = expr.as_ref() {
                let same = match &c.resolved {
                    Some((t, col)) => t == table && col == column,
                    None => c.name.value.eq_ignore_ascii_case(written),
                };
                found |= same;
            }
        }
    });
    found
}

fn null_check(tree: Option<&SqlTree>, ctx: &RevisionContext<'_>) -> CheckReport {
    let Some(tree) = tree else { return CheckReport::pass(CheckerId::Null) };
    let candidates = find(tree, PatternKind::OrderbyColumn);
    if candidates.is_empty() {
        return CheckReport::pass(CheckerId::Null);
    }
    let conn = match ctx.db.open_read_only() {
        Ok(c) => c,
        Err(e) => return CheckReport::pass_with_warning(CheckerId::Null, format!("probe failed: {e}")),
    };
    let mut flagged = Vec::new();
    let mut messages: Vec<String> = Vec::new();
    for m in candidates {
        let (Some(table), Some(column)) = (m.details.get("table"), m.details.get("catalog_column")) else { continue };
        if has_not_null_guard(tree, table, column, detail(&m, "column")) {
            continue;
        }
        let probe = format!(
            "SELECT 1 FROM {} WHERE {} IS NULL LIMIT 1",
            quote_sql_ident(table),
            quote_sql_ident(column)
        );
        let has_null = match conn.query_row(&probe, [], |_| Ok(())) {
            Ok(()) => true,
            Err(rusqlite::Error::QueryReturnedNoRows) => false,
            Err(e) => return CheckReport::pass_with_warning(CheckerId::Null, format!("probe failed: {e}")),
        };
        if has_null {
            let x = detail(&m, "expression").to_string();
            let msg = format!(
                "The ordering column {x} may contain NULLs. Add a WHERE {x} IS NOT NULL condition to ensure correct sorting."
            );
            if !messages.contains(&msg) {
                messages.push(msg);
            }
            flagged.push(m);
        }
    }
    if flagged.is_empty() {
        return CheckReport::pass(CheckerId::Null);
    }
    CheckReport::fail(CheckerId::Null, &messages.join(" "), Evidence::Patterns { matches: flagged })
}

fn result_check(sql: &str, ctx: &RevisionContext<'_>) -> CheckReport {
    if !ctx.db.path.is_file() {
        return CheckReport::pass_with_warning(CheckerId::Result, "probe failed: database unreachable".into());
    }
    let outcome = execute(sql, ctx.db, ctx.timeout);
    let (message, feedback) = match outcome.status {
        ExecStatus::Error => {
            let e = outcome.error.clone().unwrap_or_default();
            (format!("The query fails to execute: {e}."), format!("Error: {e}"))
        }
        ExecStatus::Timeout => (
            "The query did not finish within the time limit.".to_string(),
            "Error: the query timed out before returning any rows.".to_string(),
        ),
        ExecStatus::Ok => {
            let r = outcome.result.as_ref().expect("ok outcome carries a result");
            if r.is_empty() {
                (
                    "The query returned no rows.".to_string(),
                    "The query executed successfully but returned an empty result (0 rows).".to_string(),
                )
            } else if r.all_null() {
                (
                    "The query returned only NULL values.".to_string(),
                    format!("The query executed successfully but every value in its {} row(s) is NULL.", r.row_count),
                )
            } else {
                return CheckReport::pass(CheckerId::Result);
            }
        }
    };
    let mut r = CheckReport::fail(CheckerId::Result, &message, Evidence::Execution { outcome });
    r.feedback = Some(feedback);
    r
}

/// Runs one checker on `sql`.
pub fn run_checker(checker: CheckerId, sql: &str, ctx: &RevisionContext<'_>) -> CheckReport {
    let tree = parse_resolved(sql, ctx.catalog);
    run_checker_on(checker, sql, tree.as_ref(), ctx)
}

fn run_checker_on(checker: CheckerId, sql: &str, tree: Option<&SqlTree>, ctx: &RevisionContext<'_>) -> CheckReport {
    match checker {
        CheckerId::Syntax => syntax_check(sql, tree, ctx),
        CheckerId::Join => rule_check(checker, &[PatternKind::JoinNonstandard], tree),
        CheckerId::OrderBy => rule_check(checker, &[PatternKind::OrderbyAggregateLimit], tree),
        CheckerId::Time => {
            rule_check(checker, &[PatternKind::StrftimeInvalidFormat, PatternKind::StrftimeNumericCompare], tree)
        }
        CheckerId::Select => rule_check(checker, &[PatternKind::SelectStar], tree),
        CheckerId::Maxmin => rule_check(checker, &[PatternKind::MaxminSubquery], tree),
        CheckerId::Null => null_check(tree, ctx),
        CheckerId::Result => result_check(sql, ctx),
    }
}

/// All eight checkers on fixed SQL, without revision.
pub fn check_all(sql: &str, ctx: &RevisionContext<'_>) -> Vec<CheckReport> {
    let tree = parse_resolved(sql, ctx.catalog);
    CheckerId::CHAIN.iter().map(|c| run_checker_on(*c, sql, tree.as_ref(), ctx)).collect()
}

pub fn revision_request(candidate: &SqlCandidate, report: &CheckReport, ctx: &RevisionContext<'_>) -> LlmRequest {
    assert!(!report.passed, "revision requires a failed report");
    let base = if report.checker.uses_execution_revision() {
        let feedback = report.feedback.clone().or_else(|| report.directive.clone()).unwrap_or_default();
        LlmRequest::new(templates::EXECUTION_REVISION).with("RESULT", feedback)
    } else {
        LlmRequest::new(templates::RULE_REVISION).with("SUGGESTIONS", report.directive.clone().unwrap_or_default())
    };
    base.with("QUESTION", ctx.question)
        .with("HINT", ctx.hint)
        .with("DATABASE_SCHEMA", ctx.schema.text.as_str())
        .with("QUERY", candidate.sql.as_str())
        .samples(1)
        .temperature(0.0)
}

/// Asks for a corrected query; on any failure the candidate is returned unchanged with a warning.
pub fn revise(
    candidate: &SqlCandidate,
    report: &CheckReport,
    ctx: &RevisionContext<'_>,
    gateway: &Gateway,
    ledger: &TokenLedger,
) -> (SqlCandidate, Option<String>) {
    let req = revision_request(candidate, report, ctx);
    let resp = match gateway.complete(&req, Stage::Toolchain, ledger) {
        Ok(r) => r,
        Err(e) => return (candidate.clone(), Some(format!("{} revision failed: {e}", report.checker))),
    };
    match extract_sql(&resp.texts[0]) {
        Ok(sql) => {
            let mut next = candidate.clone();
            next.revisions.push(Revision {
                checker: report.checker,
                directive: report.directive.clone().unwrap_or_default(),
                old_sql: candidate.sql.clone(),
            });
            next.sql = sql;
            if let Some(u) = resp.usage.first() {
                next.tokens.0 += u.input;
                next.tokens.1 += u.output;
            }
            (next, None)
        }
        Err(e) => (candidate.clone(), Some(format!("{} revision output unusable: {e}", report.checker))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOutcome {
    pub candidate: SqlCandidate,
    pub reports: Vec<CheckReport>,
    pub warnings: Vec<String>,
}

/// Each checker once, in chain order; a failure triggers one revision and the chain moves on.
pub fn run_chain(candidate: &SqlCandidate, ctx: &RevisionContext<'_>, gateway: &Gateway, ledger: &TokenLedger) -> ChainOutcome {
    let mut current = candidate.clone();
    let mut tree = parse_resolved(&current.sql, ctx.catalog);
    let mut reports = Vec::with_capacity(CheckerId::CHAIN.len());
    let mut warnings = Vec::new();
    for checker in CheckerId::CHAIN {
        let report = run_checker_on(checker, &current.sql, tree.as_ref(), ctx);
        if let Some(w) = &report.warning {
            warnings.push(format!("{checker}: {w}"));
        }
        if !report.passed {
            let (next, warning) = revise(&current, &report, ctx, gateway, ledger);
            if let Some(w) = warning {
                log::warn!("{w}");
                warnings.push(w);
            }
            if next.sql != current.sql {
                tree = parse_resolved(&next.sql, ctx.catalog);
            }
            current = next;
        }
        reports.push(report);
    }
    ChainOutcome { candidate: current, reports, warnings }
}

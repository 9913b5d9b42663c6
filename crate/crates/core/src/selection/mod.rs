//! Execution clustering, confidence gating and pairwise adjudication.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{CanonicalResult, ExecutionOutcome};
use crate::generation::{GeneratorKind, SqlCandidate};
use crate::llm::{extract_tagged, templates, Gateway, LlmRequest, Stage, TokenLedger};

pub const DEFAULT_THETA_CONF: f64 = 0.6;
pub const DEFAULT_TOP_K: usize = 2;
pub const DEFAULT_VOTE_SAMPLES: usize = 3;
pub const DEFAULT_VOTE_TEMPERATURE: f64 = 0.7;
const PREVIEW_ROWS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SelectionError {
    #[error("no candidate executed successfully")]
    NoExecutableCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultCluster {
    /// 1-based.
    pub rank: usize,
    pub key: String,
    pub representative_result: CanonicalResult,
    pub members: Vec<SqlCandidate>,
}

impl ResultCluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// Member with the shortest SQL, ties broken lexicographically.
    pub fn representative(&self) -> &SqlCandidate {
        self.members
            .iter()
            .min_by(|a, b| a.sql.len().cmp(&b.sql.len()).then_with(|| a.sql.cmp(&b.sql)))
            .expect("clusters are non-empty")
    }

    fn earliest(&self) -> (GeneratorKind, usize) {
        self.members.iter().map(SqlCandidate::origin).min().expect("clusters are non-empty")
    }
}

/// Groups successfully executed candidates by order-insensitive result, largest first.
pub fn cluster_by_result(candidates: &[SqlCandidate], outcomes: &[ExecutionOutcome]) -> Result<Vec<ResultCluster>, SelectionError> {
    assert_eq!(candidates.len(), outcomes.len(), "one outcome per candidate");
    let mut groups: BTreeMap<String, (CanonicalResult, Vec<SqlCandidate>)> = BTreeMap::new();
    for (c, o) in candidates.iter().zip(outcomes) {
        let Some(result) = o.result.as_ref().filter(|_| o.is_ok()) else { continue };
        groups.entry(result.cluster_key()).or_insert_with(|| (result.clone(), Vec::new())).1.push(c.clone());
    }
    if groups.is_empty() {
        return Err(SelectionError::NoExecutableCandidate);
    }
    let mut clusters: Vec<ResultCluster> = groups
        .into_iter()
        .map(|(key, (representative_result, members))| ResultCluster { rank: 0, key, representative_result, members })
        .collect();
    clusters.sort_by(|a, b| b.size().cmp(&a.size()).then_with(|| a.earliest().cmp(&b.earliest())));
    for (i, c) in clusters.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(clusters)
}

pub fn confidence(cluster_size: usize, total_revised: usize) -> f64 {
    assert!(total_revised >= cluster_size && total_revised > 0, "cluster larger than candidate pool");
    cluster_size as f64 / total_revised as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ballot {
    A,
    B,
    Malformed,
}

pub fn parse_ballot(text: &str) -> Ballot {
    match extract_tagged(text, "result").map(|s| s.trim().trim_matches(|c| c == '"' || c == '\'').to_ascii_uppercase()) {
        Ok(s) if s == "A" => Ballot::A,
        Ok(s) if s == "B" => Ballot::B,
        _ => Ballot::Malformed,
    }
}

/// Majority over ballots; malformed ballots count for A, the higher-confidence side.
pub fn majority_for_a(ballots: &[Ballot]) -> bool {
    let a = ballots.iter().filter(|b| **b != Ballot::B).count();
    a * 2 > ballots.len()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    /// Rank of the higher-confidence candidate (shown as A).
    pub i: usize,
    pub j: usize,
    pub ballots: Vec<Ballot>,
    /// V(S_i, S_j).
    pub i_wins: bool,
}

/// Prompt inputs for adjudication.
#[derive(Debug, Clone, Copy)]
pub struct AdjudicationContext<'a> {
    pub question: &'a str,
    pub hint: &'a str,
    pub schema: &'a str,
}

pub fn preview(result: &CanonicalResult) -> String {
    let mut lines = vec![format!("{} row(s)", result.row_count)];
    for row in result.rows.iter().take(PREVIEW_ROWS) {
        let cells: Vec<String> = row.iter().map(|c| c.display()).collect();
        lines.push(format!("({})", cells.join(", ")));
    }
    if result.row_count as usize > PREVIEW_ROWS {
        lines.push("...".into());
    }
    lines.join("\n")
}

pub fn adjudication_request(a: &ResultCluster, b: &ResultCluster, ctx: &AdjudicationContext<'_>, samples: usize, temperature: f64) -> LlmRequest {
    LlmRequest::new(templates::ADJUDICATION)
        .with("DATABASE_SCHEMA", ctx.schema)
        .with("QUESTION", ctx.question)
        .with("HINT", ctx.hint)
        .with("CANDIDATE_A", a.representative().sql.as_str())
        .with("RESULT_A", preview(&a.representative_result))
        .with("CANDIDATE_B", b.representative().sql.as_str())
        .with("RESULT_B", preview(&b.representative_result))
        .samples(samples)
        .temperature(temperature)
}

/// V(S_i, S_j) by majority over `samples` judgments; `a` must be the higher-confidence cluster.
pub fn pairwise_adjudicate(
    a: &ResultCluster,
    b: &ResultCluster,
    ctx: &AdjudicationContext<'_>,
    gateway: &Gateway,
    ledger: &TokenLedger,
    samples: usize,
    temperature: f64,
) -> Vote {
    assert!(samples >= 1 && samples % 2 == 1, "vote samples must be odd");
    assert!(a.size() >= b.size(), "caller orders the pair by confidence");
    let req = adjudication_request(a, b, ctx, samples, temperature);
    let mut ballots = vec![Ballot::Malformed; samples];
    match gateway.complete(&req, Stage::Selection, ledger) {
        Ok(resp) => {
            for (text, idx) in resp.texts.iter().zip(&resp.sample_indices) {
                ballots[*idx] = parse_ballot(text);
            }
        }
        Err(e) => log::warn!("adjudication unavailable, keeping prior: {e}"),
    }
    Vote { i: a.rank, j: b.rank, i_wins: majority_for_a(&ballots), ballots }
}

/// WinRate over the top-`k` ranks from pairwise votes.
pub fn win_rate(k: usize, votes: &[Vote]) -> Vec<f64> {
    if k <= 1 {
        return vec![1.0; k];
    }
    let mut wins = vec![0usize; k];
    for v in votes {
        let winner = if v.i_wins { v.i } else { v.j };
        wins[winner - 1] += 1;
    }
    wins.into_iter().map(|w| w as f64 / (k - 1) as f64).collect()
}

/// Index of the best score; ties go to higher confidence, then better rank.
pub fn argmax_score(score: &[f64], conf: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..score.len() {
        let better = score[i] > score[best] || (score[i] == score[best] && conf[i] > conf[best]);
        if better {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPath {
    Shortcut,
    FullReview,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub theta_conf: f64,
    pub top_k: usize,
    pub vote_samples: usize,
    pub vote_temperature: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            theta_conf: DEFAULT_THETA_CONF,
            top_k: DEFAULT_TOP_K,
            vote_samples: DEFAULT_VOTE_SAMPLES,
            vote_temperature: DEFAULT_VOTE_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDecision {
    pub total_candidates: usize,
    pub clusters: Vec<ResultCluster>,
    /// Conf by rank (index 0 is rank 1).
    pub confidence: Vec<f64>,
    pub path: SelectionPath,
    pub votes: Vec<Vote>,
    /// WinRate and Score for the reviewed ranks.
    pub win_rate: Vec<f64>,
    pub score: Vec<f64>,
    pub final_rank: usize,
    #[serde(rename = "final")]
    pub final_candidate: SqlCandidate,
}

impl SelectionDecision {
    pub fn final_sql(&self) -> &str {
        &self.final_candidate.sql
    }
}

/// Shortcut when Conf(S_1) > θ_conf, otherwise adjudicate the top-K clusters.
pub fn select_final(
    clusters: Vec<ResultCluster>,
    total_candidates: usize,
    ctx: &AdjudicationContext<'_>,
    gateway: &Gateway,
    ledger: &TokenLedger,
    config: SelectionConfig,
) -> Result<SelectionDecision, SelectionError> {
    assert!((0.0..=1.0).contains(&config.theta_conf), "theta_conf must be in [0, 1]");
    assert!(config.top_k >= 1, "top_k must be positive");
    if clusters.is_empty() {
        return Err(SelectionError::NoExecutableCandidate);
    }
    let conf: Vec<f64> = clusters.iter().map(|c| confidence(c.size(), total_candidates)).collect();
    if conf[0] > config.theta_conf {
        let final_candidate = clusters[0].representative().clone();
        return Ok(SelectionDecision {
            total_candidates,
            confidence: conf,
            path: SelectionPath::Shortcut,
            votes: vec![],
            win_rate: vec![],
            score: vec![],
            final_rank: 1,
            final_candidate,
            clusters,
        });
    }
    let k = config.top_k.min(clusters.len());
    let mut votes = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            votes.push(pairwise_adjudicate(
                &clusters[i],
                &clusters[j],
                ctx,
                gateway,
                ledger,
                config.vote_samples,
                config.vote_temperature,
            ));
        }
    }
    let wr = win_rate(k, &votes);
    let score: Vec<f64> = (0..k).map(|i| conf[i] * wr[i]).collect();
    let best = argmax_score(&score, &conf[..k]);
    let final_candidate = clusters[best].representative().clone();
    Ok(SelectionDecision {
        total_candidates,
        confidence: conf,
        path: SelectionPath::FullReview,
        votes,
        win_rate: wr,
        score,
        final_rank: best + 1,
        final_candidate,
        clusters,
    })
}

/// What a recorded decision implies at another θ_conf, without new backend calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rescored {
    pub path: SelectionPath,
    /// `None` when review is required but no votes were recorded.
    pub final_rank: Option<usize>,
}

pub fn rescore(decision: &SelectionDecision, theta_conf: f64) -> Rescored {
    rescore_recorded(decision.confidence[0], decision.path, decision.final_rank, theta_conf)
}

/// `rescore` from the three recorded fields it depends on.
pub fn rescore_recorded(top_confidence: f64, path: SelectionPath, final_rank: usize, theta_conf: f64) -> Rescored {
    if top_confidence > theta_conf {
        return Rescored { path: SelectionPath::Shortcut, final_rank: Some(1) };
    }
    let final_rank = match path {
        SelectionPath::FullReview => Some(final_rank),
        SelectionPath::Shortcut => None,
    };
    Rescored { path: SelectionPath::FullReview, final_rank }
}

#[cfg(test)]
mod tests;

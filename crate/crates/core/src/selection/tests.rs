use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::executor::{Cell, ExecStatus};
use crate::llm::{ScriptRule, ScriptedFailure};
use crate::testutil::gateway;

fn ok(v: i64) -> ExecutionOutcome {
    ExecutionOutcome {
        status: ExecStatus::Ok,
        result: Some(CanonicalResult::from_rows(1, vec![vec![Cell::Int(v)]])),
        error: None,
        elapsed: Duration::ZERO,
    }
}

fn err() -> ExecutionOutcome {
    ExecutionOutcome { status: ExecStatus::Error, result: None, error: Some("no such column: x".into()), elapsed: Duration::ZERO }
}

/// One candidate per outcome; `None` marks an error.
fn pool(results: &[Option<i64>]) -> (Vec<SqlCandidate>, Vec<ExecutionOutcome>) {
    let cands = results
        .iter()
        .enumerate()
        .map(|(i, r)| SqlCandidate::new(format!("SELECT {} -- {i}", r.unwrap_or(-1)), GeneratorKind::ALL[i % 3], i / 3))
        .collect();
    let outs = results.iter().map(|r| r.map_or_else(err, ok)).collect();
    (cands, outs)
}

fn ctx() -> AdjudicationContext<'static> {
    AdjudicationContext { question: "q", hint: "", schema: "CREATE TABLE t (a INTEGER)" }
}

fn voter(answers: &[&str]) -> Gateway {
    gateway(vec![ScriptRule::new(templates::ADJUDICATION, answers)])
}

#[test]
fn clustering_examples() {
    let (c, o) = pool(&[Some(1), Some(1), Some(2)]);
    let cl = cluster_by_result(&c, &o).unwrap();
    assert_eq!(cl.iter().map(ResultCluster::size).collect::<Vec<_>>(), [2, 1]);
    assert_eq!(cl.iter().map(|c| c.rank).collect::<Vec<_>>(), [1, 2]);

    let (c, o) = pool(&[None, None]);
    assert_eq!(cluster_by_result(&c, &o), Err(SelectionError::NoExecutableCandidate));

    let (c, o) = pool(&[Some(1), Some(2), Some(1), None, Some(1), Some(2), Some(1), Some(1)]);
    let cl = cluster_by_result(&c, &o).unwrap();
    assert_eq!(cl.iter().map(ResultCluster::size).collect::<Vec<_>>(), [5, 2]);
    assert_eq!(confidence(cl[0].size(), 8), 0.625);
    assert_eq!(confidence(cl[1].size(), 8), 0.25);
}

#[test]
fn equal_sized_clusters_rank_by_earliest_member() {
    let (c, o) = pool(&[Some(7), Some(3), Some(3), Some(7)]);
    let cl = cluster_by_result(&c, &o).unwrap();
    // origins: 0 -> (skeleton,0) holds 7; 1 -> (icl,0) holds 3
    assert_eq!(cl[0].representative_result.rows[0][0], Cell::Int(7));
}

#[test]
fn representative_is_shortest_then_lexicographic() {
    let c = vec![
        SqlCandidate::new("SELECT  b", GeneratorKind::Skeleton, 0),
        SqlCandidate::new("SELECT b", GeneratorKind::Icl, 0),
        SqlCandidate::new("SELECT a", GeneratorKind::DivideConquer, 0),
    ];
    let o = vec![ok(1), ok(1), ok(1)];
    assert_eq!(cluster_by_result(&c, &o).unwrap()[0].representative().sql, "SELECT a");
}

#[test]
fn confidence_examples() {
    assert_eq!(confidence(5, 8), 0.625);
    assert_eq!(confidence(8, 8), 1.0);
    assert_eq!(confidence(2, 8), 0.25);
}

#[test]
fn ballots_and_majority() {
    assert_eq!(parse_ballot("<reasoning>x</reasoning><result>A</result>"), Ballot::A);
    assert_eq!(parse_ballot("<result> b </result>"), Ballot::B);
    assert_eq!(parse_ballot("I pick A"), Ballot::Malformed);
    assert!(majority_for_a(&[Ballot::A, Ballot::B, Ballot::A]));
    assert!(!majority_for_a(&[Ballot::B, Ballot::B, Ballot::A]));
    assert!(majority_for_a(&[Ballot::Malformed, Ballot::B, Ballot::Malformed]));
}

fn two_clusters(a: usize, b: usize, total_errors: usize) -> (Vec<ResultCluster>, usize) {
    let mut r: Vec<Option<i64>> = Vec::new();
    r.extend(std::iter::repeat_n(Some(1), a));
    r.extend(std::iter::repeat_n(Some(2), b));
    r.extend(std::iter::repeat_n(None, total_errors));
    let (c, o) = pool(&r);
    (cluster_by_result(&c, &o).unwrap(), r.len())
}

#[test]
fn adjudication_votes() {
    let (cl, _) = two_clusters(2, 2, 0);
    let ledger = TokenLedger::new();
    let always_a = pairwise_adjudicate(&cl[0], &cl[1], &ctx(), &voter(&["<result>A</result>"]), &ledger, 3, 0.7);
    assert!(always_a.i_wins);
    assert_eq!(ledger.call_count(), 3);
    let aba = voter(&["<result>A</result>", "<result>B</result>", "<result>A</result>"]);
    assert!(pairwise_adjudicate(&cl[0], &cl[1], &ctx(), &aba, &ledger, 3, 0.7).i_wins);
    let malformed = pairwise_adjudicate(&cl[0], &cl[1], &ctx(), &voter(&["???"]), &ledger, 3, 0.7);
    assert!(malformed.i_wins);
    assert_eq!(malformed.ballots, [Ballot::Malformed; 3]);
    let down = gateway(vec![ScriptRule::new("*", &["x"]).failing(ScriptedFailure::Fatal)]);
    assert!(pairwise_adjudicate(&cl[0], &cl[1], &ctx(), &down, &ledger, 3, 0.7).i_wins);
}

#[test]
fn adjudication_prompt_shows_both_candidates() {
    let (cl, _) = two_clusters(3, 1, 0);
    let req = adjudication_request(&cl[0], &cl[1], &ctx(), 3, 0.7);
    assert_eq!(req.placeholders["CANDIDATE_A"], cl[0].representative().sql);
    assert_eq!(req.placeholders["CANDIDATE_B"], cl[1].representative().sql);
    assert_eq!(req.placeholders["RESULT_A"], "1 row(s)\n(1)");
    assert_eq!(req.samples, 3);
}

#[test]
fn win_rate_examples() {
    let v = |i, j, i_wins| Vote { i, j, ballots: vec![], i_wins };
    assert_eq!(win_rate(2, &[v(1, 2, true)]), [1.0, 0.0]);
    assert_eq!(win_rate(3, &[v(1, 2, true), v(1, 3, true), v(2, 3, true)])[0], 1.0);
    // cyclic: 1 beats 2, 2 beats 3, 3 beats 1
    assert_eq!(win_rate(3, &[v(1, 2, true), v(2, 3, true), v(1, 3, false)]), [0.5, 0.5, 0.5]);
}

#[test]
fn shortcut_above_threshold_makes_no_calls() {
    let (cl, total) = two_clusters(5, 3, 0);
    let ledger = TokenLedger::new();
    let d = select_final(cl, total, &ctx(), &gateway(vec![]), &ledger, SelectionConfig::default()).unwrap();
    assert_eq!(d.path, SelectionPath::Shortcut);
    assert_eq!(d.confidence[0], 0.625);
    assert!(d.votes.is_empty());
    assert_eq!(ledger.call_count(), 0);
    assert_eq!(d.final_rank, 1);

    let (cl, total) = two_clusters(8, 0, 0);
    let d = select_final(cl, total, &ctx(), &gateway(vec![]), &ledger, SelectionConfig::default()).unwrap();
    assert_eq!((d.path, d.confidence[0]), (SelectionPath::Shortcut, 1.0));
}

#[test]
fn equal_confidence_goes_to_adjudication_winner() {
    let (cl, total) = two_clusters(3, 3, 2);
    let ledger = TokenLedger::new();
    let d = select_final(cl, total, &ctx(), &voter(&["<result>B</result>"]), &ledger, SelectionConfig::default()).unwrap();
    assert_eq!(d.path, SelectionPath::FullReview);
    assert_eq!(d.confidence, [0.375, 0.375]);
    assert_eq!(d.win_rate, [0.0, 1.0]);
    assert_eq!(d.score, [0.0, 0.375]);
    assert_eq!(d.final_rank, 2);
    assert_eq!(d.final_sql(), d.clusters[1].representative().sql);
    assert_eq!(ledger.call_count(), 3);
}

#[test]
fn threshold_is_strict() {
    let (cl, total) = two_clusters(3, 2, 0);
    let cfg = SelectionConfig { theta_conf: 0.6, ..SelectionConfig::default() };
    let d = select_final(cl, total, &ctx(), &voter(&["<result>A</result>"]), &TokenLedger::new(), cfg).unwrap();
    assert_eq!(d.confidence[0], 0.6);
    assert_eq!(d.path, SelectionPath::FullReview);
}

#[test]
fn single_cluster_below_threshold_needs_no_votes() {
    let (cl, total) = two_clusters(2, 0, 6);
    let ledger = TokenLedger::new();
    let d = select_final(cl, total, &ctx(), &gateway(vec![]), &ledger, SelectionConfig::default()).unwrap();
    assert_eq!(d.path, SelectionPath::FullReview);
    assert_eq!(d.final_rank, 1);
    assert_eq!(ledger.call_count(), 0);
}

#[test]
fn decisions_are_deterministic() {
    let run = || {
        let (cl, total) = two_clusters(3, 3, 2);
        let d = select_final(cl, total, &ctx(), &voter(&["<result>A</result>", "<result>B</result>"]), &TokenLedger::new(), SelectionConfig::default())
            .unwrap();
        serde_json::to_string(&d).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn rescore_follows_the_threshold() {
    let (cl, total) = two_clusters(3, 3, 2);
    let d = select_final(cl, total, &ctx(), &voter(&["<result>B</result>"]), &TokenLedger::new(), SelectionConfig::default()).unwrap();
    assert_eq!(rescore(&d, 0.3), Rescored { path: SelectionPath::Shortcut, final_rank: Some(1) });
    assert_eq!(rescore(&d, 0.6), Rescored { path: SelectionPath::FullReview, final_rank: Some(2) });
    let (cl, total) = two_clusters(5, 3, 0);
    let s = select_final(cl, total, &ctx(), &gateway(vec![]), &TokenLedger::new(), SelectionConfig::default()).unwrap();
    assert_eq!(rescore(&s, 0.9), Rescored { path: SelectionPath::FullReview, final_rank: None });
}

/// Brute force: first index maximizing (score, conf), scanning in rank order.
fn brute_argmax(score: &[f64], conf: &[f64]) -> usize {
    let best = score.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..score.len()).filter(|i| score[*i] == best).collect();
    let top_conf = tied.iter().map(|i| conf[*i]).fold(f64::NEG_INFINITY, f64::max);
    *tied.iter().find(|i| conf[**i] == top_conf).unwrap()
}

proptest! {
    #[test]
    fn score_argmax_matches_brute_force(
        sizes in proptest::collection::vec(1usize..6, 2..5),
        errors in 0usize..4,
        outcomes in proptest::collection::vec(any::<bool>(), 6),
    ) {
        let mut sizes = sizes;
        sizes.sort_by(|a, b| b.cmp(a));
        let k = sizes.len();
        let total: usize = sizes.iter().sum::<usize>() + errors;
        let conf: Vec<f64> = sizes.iter().map(|s| confidence(*s, total)).collect();
        prop_assert!(conf.iter().sum::<f64>() <= 1.0 + 1e-12);
        let mut votes = Vec::new();
        let mut n = 0;
        for i in 1..=k {
            for j in i + 1..=k {
                votes.push(Vote { i, j, ballots: vec![], i_wins: outcomes[n % outcomes.len()] });
                n += 1;
            }
        }
        let wr = win_rate(k, &votes);
        // WinRate by hand from the vote matrix
        for i in 1..=k {
            let wins = votes.iter().filter(|v| (v.i == i && v.i_wins) || (v.j == i && !v.i_wins)).count();
            prop_assert_eq!(wr[i - 1], wins as f64 / (k - 1) as f64);
        }
        let score: Vec<f64> = (0..k).map(|i| conf[i] * wr[i]).collect();
        prop_assert_eq!(argmax_score(&score, &conf), brute_argmax(&score, &conf));
    }

    #[test]
    fn shortcut_iff_confidence_exceeds_threshold(sizes in proptest::collection::vec(1usize..5, 1..4), errors in 0usize..3, theta in 0.0f64..1.0) {
        let mut r = Vec::new();
        for (v, s) in sizes.iter().enumerate() {
            r.extend(std::iter::repeat_n(Some(v as i64), *s));
        }
        r.extend(std::iter::repeat_n(None, errors));
        let (c, o) = pool(&r);
        let cl = cluster_by_result(&c, &o).unwrap();
        let ledger = TokenLedger::new();
        let cfg = SelectionConfig { theta_conf: theta, ..SelectionConfig::default() };
        let expect_shortcut = confidence(cl[0].size(), r.len()) > theta;
        let d = select_final(cl, r.len(), &ctx(), &voter(&["<result>A</result>"]), &ledger, cfg).unwrap();
        prop_assert_eq!(d.path == SelectionPath::Shortcut, expect_shortcut);
        if expect_shortcut {
            prop_assert_eq!(ledger.call_count(), 0);
        }
        prop_assert_eq!(rescore(&d, theta).path, d.path);
    }
}

//! Trust and election properties, run through proptest's runner so the
//! acceptance binary and the test suite share them.

use std::collections::{BTreeMap, BTreeSet};

use manet_ids::kernel::SimTime;
use manet_ids::trust::{tally, tally_counts, Ballot, TieBreak, TrustParams, TrustTable};
use manet_ids::NodeId;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

fn params() -> impl Strategy<Value = TrustParams> {
    (0.0f64..=1.0, 0.0f64..=1.0, 0.01f64..0.5, 0.0f64..0.05).prop_map(|(a, b, step, rate)| {
        let (initial, cap) = if a <= b { (a, b) } else { (b, a) };
        TrustParams {
            initial,
            penalty_step: step,
            recovery_rate: rate,
            cap,
            eligibility: 0.5,
        }
    })
}

/// (penalize?, node, severity, dt)
fn ops() -> impl Strategy<Value = Vec<(bool, u32, f64, f64)>> {
    proptest::collection::vec((any::<bool>(), 0u32..4, 0.01f64..3.0, 0.0f64..40.0), 1..80)
}

fn trust_walk(p: TrustParams, ops: Vec<(bool, u32, f64, f64)>) -> Result<(), TestCaseError> {
    let mut tbl = TrustTable::new(p);
    let mut now = 0.0;
    for (pen, node, sev, dt) in ops {
        now += dt;
        let (t, n) = (SimTime::from_secs(now), NodeId(node));
        let before = tbl.value(n, t);
        prop_assert!((0.0..=1.0).contains(&before));
        prop_assert!(before <= p.cap.max(p.initial));
        let after = if pen {
            tbl.penalize(n, sev, t).unwrap()
        } else {
            tbl.recover(n, t)
        };
        prop_assert!((0.0..=1.0).contains(&after), "trust {after} out of range");
        prop_assert!(after <= p.cap, "recovery passed the cap: {after} > {}", p.cap);
        if pen && before > 0.0 {
            prop_assert!(after < before, "penalty did not lower trust: {before} -> {after}");
        }
    }
    Ok(())
}

fn ballots() -> impl Strategy<Value = (Vec<(u32, u32)>, BTreeMap<u32, u32>)> {
    (
        proptest::collection::vec((0u32..40, 0u32..8), 1..40),
        proptest::collection::btree_map(0u32..8, 0u32..6, 0..8),
    )
}

/// Winner by the documented rule: most votes, then highest connectivity,
/// then lowest id. One ballot per voter, first one wins.
fn reference_winner(ballots: &[(u32, u32)], conn: &BTreeMap<u32, u32>) -> (u32, TieBreak) {
    let mut seen = BTreeSet::new();
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for (voter, cand) in ballots {
        if seen.insert(*voter) {
            *counts.entry(*cand).or_default() += 1;
        }
    }
    let top = *counts.values().max().unwrap();
    let leaders: Vec<u32> = counts.iter().filter(|(_, c)| **c == top).map(|(n, _)| *n).collect();
    if leaders.len() == 1 {
        return (leaders[0], TieBreak::None);
    }
    let deg = |n: &u32| conn.get(n).copied().unwrap_or(0);
    let best = leaders.iter().map(deg).max().unwrap();
    let top: Vec<u32> = leaders.into_iter().filter(|n| deg(n) == best).collect();
    if top.len() == 1 {
        (top[0], TieBreak::Connectivity)
    } else {
        (top[0], TieBreak::Id)
    }
}

fn election(raw: Vec<(u32, u32)>, conn: BTreeMap<u32, u32>, k: u32) -> Result<(), TestCaseError> {
    let bs: Vec<Ballot> = raw
        .iter()
        .map(|(v, c)| Ballot {
            voter: NodeId(*v),
            candidate: NodeId(*c),
            epoch: 3,
        })
        .collect();
    let connectivity: BTreeMap<NodeId, u32> = conn.iter().map(|(n, d)| (NodeId(*n), *d)).collect();
    let res = tally(&bs, &connectivity).expect("ballots are non-empty");
    let (want, how) = reference_winner(&raw, &conn);
    prop_assert_eq!(res.winner, NodeId(want));
    prop_assert_eq!(res.tie_broken_by, how);
    let max = *res.vote_counts.values().max().unwrap();
    prop_assert_eq!(res.vote_counts[&res.winner], max);

    let scaled: BTreeMap<NodeId, u32> = res.vote_counts.iter().map(|(n, c)| (*n, c * k)).collect();
    prop_assert_eq!(
        tally_counts(&scaled, &connectivity),
        Some((res.winner, res.tie_broken_by))
    );
    // the same scaling expressed as ballots: every voter cloned k times
    let mut seen = BTreeSet::new();
    let firsts: Vec<(u32, u32)> = raw.iter().copied().filter(|(v, _)| seen.insert(*v)).collect();
    let cloned: Vec<Ballot> = firsts
        .iter()
        .flat_map(|(v, c)| {
            (0..k).map(move |i| Ballot {
                voter: NodeId(v * 1000 + i),
                candidate: NodeId(*c),
                epoch: 3,
            })
        })
        .collect();
    prop_assert_eq!(tally(&cloned, &connectivity).unwrap().winner, res.winner);
    Ok(())
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

pub fn check_trust(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(params(), ops()), |(p, o)| trust_walk(p, o))
        .map_err(|e| e.to_string())
}

pub fn check_election(cases: u32) -> Result<(), String> {
    runner(cases)
        .run(&(ballots(), 1u32..10), |((raw, conn), k)| election(raw, conn, k))
        .map_err(|e| e.to_string())
}

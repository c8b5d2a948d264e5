//! Trust bookkeeping and trust-weighted cluster-head elections.
//!
//! Trust drops by a fixed step per unit of severity whenever a node is
//! caught misbehaving and climbs back linearly with time up to a cap.
//! Recovery is applied lazily, right before any read.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustParams {
    pub initial: f64,
    /// Trust lost per unit of severity.
    pub penalty_step: f64,
    /// Trust regained per second.
    pub recovery_rate: f64,
    pub cap: f64,
    /// Minimum trust to stand as a candidate.
    pub eligibility: f64,
}

impl Default for TrustParams {
    fn default() -> Self {
        TrustParams {
            initial: 0.5,
            penalty_step: 0.2,
            recovery_rate: 0.005,
            cap: 1.0,
            eligibility: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustScore {
    pub value: f64,
    pub last_update: SimTime,
}

#[derive(Debug, Clone, Default)]
pub struct TrustTable {
    params: TrustParams,
    scores: BTreeMap<NodeId, TrustScore>,
}

impl TrustTable {
    pub fn new(params: TrustParams) -> Self {
        TrustTable {
            params,
            scores: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &TrustParams {
        &self.params
    }

    /// Creates an entry at the initial value if `node` is unknown.
    pub fn ensure(&mut self, node: NodeId, now: SimTime) {
        let initial = self.params.initial;
        self.scores.entry(node).or_insert(TrustScore {
            value: initial,
            last_update: now,
        });
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.scores.contains_key(&node)
    }

    pub fn penalize(&mut self, node: NodeId, severity: f64, now: SimTime) -> Result<f64> {
        if severity < 0.0 || severity.is_nan() {
            return Err(Error::NegativeSeverity(severity));
        }
        self.recover(node, now);
        let step = self.params.penalty_step;
        let s = self.scores.get_mut(&node).expect("recover creates the entry");
        s.value = (s.value - step * severity).max(0.0);
        s.last_update = now;
        Ok(s.value)
    }

    pub fn recover(&mut self, node: NodeId, now: SimTime) -> f64 {
        self.ensure(node, now);
        let (rate, cap) = (self.params.recovery_rate, self.params.cap);
        let s = self.scores.get_mut(&node).unwrap();
        let elapsed = now.since(s.last_update);
        s.value = (s.value + rate * elapsed).min(cap);
        if now > s.last_update {
            s.last_update = now;
        }
        s.value
    }

    /// Current value with recovery applied.
    pub fn value(&mut self, node: NodeId, now: SimTime) -> f64 {
        self.recover(node, now)
    }

    pub fn snapshot(&mut self, now: SimTime) -> Vec<(NodeId, f64)> {
        let ids: Vec<NodeId> = self.scores.keys().copied().collect();
        ids.into_iter().map(|n| (n, self.recover(n, now))).collect()
    }

    /// Installs entries copied from another table (head handover).
    pub fn merge_from(&mut self, entries: &[(NodeId, TrustScore)]) {
        for (n, s) in entries {
            self.scores.insert(*n, *s);
        }
    }

    pub fn entries(&self) -> Vec<(NodeId, TrustScore)> {
        self.scores.iter().map(|(n, s)| (*n, *s)).collect()
    }
}

/// Election period shrinks as nodes move faster: `base * 5 / (5 + speed)`.
pub fn election_period(base: f64, mean_speed: f64) -> f64 {
    base * 5.0 / (5.0 + mean_speed.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ballot {
    pub voter: NodeId,
    pub candidate: NodeId,
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    None,
    Connectivity,
    Id,
}

impl TieBreak {
    pub fn as_str(self) -> &'static str {
        match self {
            TieBreak::None => "none",
            TieBreak::Connectivity => "connectivity",
            TieBreak::Id => "id",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectionResult {
    pub winner: NodeId,
    pub vote_counts: BTreeMap<NodeId, u32>,
    pub tie_broken_by: TieBreak,
    pub epoch: u64,
}

/// Picks the voter's most trusted eligible candidate, lowest id on ties.
/// Abstains when nobody reaches the eligibility threshold.
pub fn cast_vote(
    voter: NodeId,
    table: &mut TrustTable,
    candidates: &[NodeId],
    epoch: u64,
    now: SimTime,
) -> Option<Ballot> {
    let threshold = table.params().eligibility;
    let mut best: Option<(NodeId, f64)> = None;
    let mut sorted = candidates.to_vec();
    sorted.sort();
    sorted.dedup();
    for c in sorted {
        let v = table.value(c, now);
        if v < threshold {
            continue;
        }
        if best.is_none_or(|(_, bv)| v > bv) {
            best = Some((c, v));
        }
    }
    best.map(|(candidate, _)| Ballot {
        voter,
        candidate,
        epoch,
    })
}

/// Counts one ballot per voter (the first one seen). Ties go to the higher
/// connectivity index, then to the lowest id.
pub fn tally(ballots: &[Ballot], connectivity: &BTreeMap<NodeId, u32>) -> Option<ElectionResult> {
    let epoch = ballots.first()?.epoch;
    let counts = count_votes(ballots);
    let top = *counts.values().max()?;
    let leaders: Vec<NodeId> = counts
        .iter()
        .filter(|(_, c)| **c == top)
        .map(|(n, _)| *n)
        .collect();
    let (winner, how) = break_ties(&leaders, connectivity);
    Some(ElectionResult {
        winner,
        vote_counts: counts,
        tie_broken_by: how,
        epoch,
    })
}

fn count_votes(ballots: &[Ballot]) -> BTreeMap<NodeId, u32> {
    let mut seen = std::collections::BTreeSet::new();
    let mut counts = BTreeMap::new();
    for b in ballots {
        if seen.insert(b.voter) {
            *counts.entry(b.candidate).or_insert(0) += 1;
        }
    }
    counts
}

/// Winner for raw counts; exposed for property checks.
pub fn tally_counts(
    counts: &BTreeMap<NodeId, u32>,
    connectivity: &BTreeMap<NodeId, u32>,
) -> Option<(NodeId, TieBreak)> {
    let top = *counts.values().max()?;
    let leaders: Vec<NodeId> = counts
        .iter()
        .filter(|(_, c)| **c == top)
        .map(|(n, _)| *n)
        .collect();
    Some(break_ties(&leaders, connectivity))
}

fn break_ties(leaders: &[NodeId], connectivity: &BTreeMap<NodeId, u32>) -> (NodeId, TieBreak) {
    if leaders.len() == 1 {
        return (leaders[0], TieBreak::None);
    }
    let degree = |n: &NodeId| connectivity.get(n).copied().unwrap_or(0);
    let best = leaders.iter().map(degree).max().unwrap_or(0);
    let top: Vec<NodeId> = leaders.iter().copied().filter(|n| degree(n) == best).collect();
    if top.len() == 1 {
        (top[0], TieBreak::Connectivity)
    } else {
        (*top.iter().min().unwrap(), TieBreak::Id)
    }
}

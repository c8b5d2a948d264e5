//! Head-side cooperative verdicts over agent results.

use std::collections::BTreeMap;

use super::{AnomalyRule, Band};
use crate::agents::Observation;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub enum CoopVerdict {
    Confirmed { median: f64, observers: usize },
    Inconclusive { median: Option<f64>, observers: usize },
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    })
}

/// Drops no-data results, keeps one value per observer and confirms when at
/// least `quorum` observers remain and their median is past the hard bound.
pub fn cooperative_verdict(rule: &AnomalyRule, results: &[(NodeId, Observation)], quorum: usize) -> CoopVerdict {
    let mut per_node = BTreeMap::new();
    for (node, obs) in results {
        if let Observation::Value(v) = obs {
            per_node.entry(*node).or_insert(*v);
        }
    }
    let mut values: Vec<f64> = per_node.into_values().collect();
    let observers = values.len();
    let med = median(&mut values);
    match med {
        Some(m) if observers >= quorum && rule.classify(m) == Band::Hard => CoopVerdict::Confirmed { median: m, observers },
        _ => CoopVerdict::Inconclusive { median: med, observers },
    }
}

/// Registered members that can hear the suspect, minus the suspect, the
/// requester and blocked nodes; lowest ids first, at most `cap`.
pub fn build_itinerary(
    members: &[NodeId],
    hears_suspect: impl Fn(NodeId) -> bool,
    suspect: NodeId,
    requester: NodeId,
    blocked: impl Fn(NodeId) -> bool,
    cap: usize,
) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = members
        .iter()
        .copied()
        .filter(|m| *m != suspect && *m != requester && !blocked(*m) && hears_suspect(*m))
        .collect();
    out.sort();
    out.dedup();
    out.truncate(cap);
    out
}

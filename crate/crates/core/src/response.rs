//! Intrusion response: local blocking, cluster isolation and network-wide
//! isolation, plus the per-node blocklist every frame is checked against.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResponseKind {
    BlockLocal,
    ClusterIsolate,
    NetworkIsolate,
}

impl ResponseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ResponseKind::BlockLocal => "local",
            ResponseKind::ClusterIsolate => "cluster",
            ResponseKind::NetworkIsolate => "network",
        }
    }
}

impl fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResponseAction {
    pub kind: ResponseKind,
    pub subject: NodeId,
    pub epoch: u64,
    pub issuer: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseConfig {
    /// Escalate to a network-wide isolation on cooperative confirmations.
    pub escalate_on_cooperative: bool,
    /// Distinct anomaly reporters needed before a head isolates.
    pub anomaly_reporters: usize,
    /// Seconds a block lasts; `None` keeps it for the rest of the run.
    pub block_ttl: Option<f64>,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            escalate_on_cooperative: true,
            anomaly_reporters: 2,
            block_ttl: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Blocklist {
    owner: NodeId,
    ttl: Option<f64>,
    entries: BTreeMap<NodeId, SimTime>,
}

impl Blocklist {
    pub fn new(owner: NodeId, ttl: Option<f64>) -> Self {
        Blocklist {
            owner,
            ttl,
            entries: BTreeMap::new(),
        }
    }

    /// Adds `subject`. Returns true if it was not blocked yet.
    pub fn block(&mut self, subject: NodeId, now: SimTime) -> Result<bool> {
        if subject == self.owner {
            return Err(Error::SelfBlock(subject));
        }
        if self.is_blocked(subject, now) {
            return Ok(false);
        }
        self.entries.insert(subject, now);
        Ok(true)
    }

    pub fn is_blocked(&self, node: NodeId, now: SimTime) -> bool {
        match (self.entries.get(&node), self.ttl) {
            (None, _) => false,
            (Some(_), None) => true,
            (Some(at), Some(ttl)) => now.since(*at) < ttl,
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn blocked(&self) -> Vec<NodeId> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enforcement {
    Accept,
    Drop,
}

/// Drops anything sent or originated by a blocked node.
pub fn enforce(list: &Blocklist, transmitter: NodeId, origin: Option<NodeId>, now: SimTime) -> Enforcement {
    let blocked = list.is_blocked(transmitter, now) || origin.is_some_and(|o| list.is_blocked(o, now));
    if blocked {
        Enforcement::Drop
    } else {
        Enforcement::Accept
    }
}

/// What a head decided after a confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Escalation {
    pub cluster: bool,
    pub network: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evidence {
    Misuse,
    Anomaly,
    Cooperative,
}

/// Head-side response bookkeeping: issued actions, reporters per subject
/// and duplicate suppression for relayed network isolations.
#[derive(Debug, Clone, Default)]
pub struct ResponsePolicy {
    cfg: ResponseConfig,
    epoch: u64,
    anomaly_reporters: BTreeMap<NodeId, BTreeSet<NodeId>>,
    isolated: BTreeMap<NodeId, u32>,
    seen_network: BTreeSet<(NodeId, NodeId, u64)>,
    escalated: BTreeSet<NodeId>,
}

impl ResponsePolicy {
    pub fn new(cfg: ResponseConfig) -> Self {
        ResponsePolicy {
            cfg,
            ..Default::default()
        }
    }

    pub fn next_epoch(&mut self) -> u64 {
        self.epoch += 1;
        self.epoch
    }

    pub fn is_isolated(&self, subject: NodeId) -> bool {
        self.isolated.contains_key(&subject)
    }

    pub fn isolated(&self) -> Vec<NodeId> {
        self.isolated.keys().copied().collect()
    }

    /// Cluster and network escalation for a new piece of evidence about
    /// `subject` from `reporter`.
    pub fn on_evidence(&mut self, subject: NodeId, reporter: NodeId, ev: Evidence) -> Escalation {
        let confirmed = match ev {
            Evidence::Misuse | Evidence::Cooperative => true,
            Evidence::Anomaly => {
                let set = self.anomaly_reporters.entry(subject).or_default();
                set.insert(reporter);
                set.len() >= self.cfg.anomaly_reporters
            }
        };
        if !confirmed {
            return Escalation {
                cluster: false,
                network: false,
            };
        }
        let count = self.isolated.entry(subject).or_insert(0);
        *count += 1;
        let repeat = *count > 1;
        let network = ((ev == Evidence::Cooperative && self.cfg.escalate_on_cooperative) || repeat)
            && self.escalated.insert(subject);
        Escalation {
            cluster: *count == 1,
            network,
        }
    }

    /// Records that a cluster isolation was applied for `subject` without
    /// local evidence (e.g. relayed from a neighbor head).
    pub fn mark_isolated(&mut self, subject: NodeId) -> bool {
        let c = self.isolated.entry(subject).or_insert(0);
        *c += 1;
        *c == 1
    }

    /// First sighting of a network isolation instance.
    pub fn first_network(&mut self, action: &ResponseAction) -> bool {
        self.seen_network
            .insert((action.subject, action.issuer, action.epoch))
    }
}

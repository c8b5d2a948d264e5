//! Promiscuous forwarding watchdog.
//!
//! Every data packet handed to a neighbor for relaying opens an
//! expectation: the neighbor should be overheard retransmitting the same
//! packet before the deadline. Expectations are tallied per suspect and per
//! window of the handoff time.

use std::collections::{BTreeMap, HashMap};

use crate::kernel::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Handoff {
    pub at: SimTime,
    pub next: NodeId,
    pub origin: NodeId,
    pub pid: u64,
    pub dst: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Tally {
    pub expected: u32,
    pub forwarded: u32,
}

impl Tally {
    pub fn ratio(&self) -> Option<f64> {
        (self.expected > 0).then(|| self.forwarded as f64 / self.expected as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Watchdog {
    deadline: f64,
    window: f64,
    pending: HashMap<(NodeId, NodeId, u64), Handoff>,
    tallies: BTreeMap<(u64, NodeId), Tally>,
}

impl Watchdog {
    pub fn new(deadline: f64, window: f64) -> Self {
        Watchdog {
            deadline,
            window,
            pending: HashMap::new(),
            tallies: BTreeMap::new(),
        }
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn window_of(&self, t: SimTime) -> u64 {
        (t.secs() / self.window).floor() as u64
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    pub fn on_handoff(&mut self, h: Handoff) {
        let w = self.window_of(h.at);
        self.tallies.entry((w, h.next)).or_default().expected += 1;
        self.pending.insert((h.next, h.origin, h.pid), h);
    }

    /// `from` was overheard sending `(origin, pid)`. Returns the matching
    /// handoff when this closes an open expectation in time.
    pub fn on_overheard(&mut self, from: NodeId, origin: NodeId, pid: u64, now: SimTime) -> Option<Handoff> {
        let key = (from, origin, pid);
        let h = *self.pending.get(&key)?;
        if now.since(h.at) > self.deadline {
            return None;
        }
        self.pending.remove(&key);
        let w = self.window_of(h.at);
        self.tallies.entry((w, h.next)).or_default().forwarded += 1;
        Some(h)
    }

    /// `from` reported it has no route to `dsts`; open expectations for those
    /// destinations are withdrawn.
    pub fn excuse(&mut self, from: NodeId, dsts: &[NodeId]) -> Vec<Handoff> {
        let keys: Vec<_> = self
            .pending
            .iter()
            .filter(|(_, h)| h.next == from && dsts.contains(&h.dst))
            .map(|(k, _)| *k)
            .collect();
        let mut out = Vec::new();
        for k in keys {
            let h = self.pending.remove(&k).expect("key just listed");
            let w = self.window_of(h.at);
            if let Some(t) = self.tallies.get_mut(&(w, h.next)) {
                t.expected -= 1;
            }
            out.push(h);
        }
        out.sort_by_key(|a| (a.at, a.origin, a.pid));
        out
    }

    /// Expectations whose deadline has passed, oldest first.
    pub fn sweep(&mut self, now: SimTime) -> Vec<Handoff> {
        let keys: Vec<_> = self
            .pending
            .iter()
            .filter(|(_, h)| now.since(h.at) >= self.deadline)
            .map(|(k, _)| *k)
            .collect();
        let mut out: Vec<Handoff> = keys
            .into_iter()
            .map(|k| self.pending.remove(&k).expect("key just listed"))
            .collect();
        out.sort_by_key(|a| (a.at, a.origin, a.pid));
        out
    }

    pub fn tally(&self, window: u64, suspect: NodeId) -> Tally {
        self.tallies.get(&(window, suspect)).copied().unwrap_or_default()
    }

    /// All suspects with handoffs in `window`.
    pub fn window_tallies(&self, window: u64) -> Vec<(NodeId, Tally)> {
        self.tallies
            .range((window, NodeId(0))..=(window, NodeId(u32::MAX)))
            .map(|((_, n), t)| (*n, *t))
            .collect()
    }

    /// Forgets tallies for windows before `window`.
    pub fn prune_before(&mut self, window: u64) {
        self.tallies = self.tallies.split_off(&(window, NodeId(0)));
    }
}

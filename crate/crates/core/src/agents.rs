//! Mobile-agent lifecycle.
//!
//! A head creates an agent carrying a query and an itinerary of members.
//! Each visited node appends its own observation and passes the agent on;
//! the last one sends it home. The head keeps a registry entry with a
//! deadline per agent and re-dispatches a fresh agent when one is lost.

use std::collections::BTreeMap;
use std::fmt;

use crate::detection::Metric;
use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConfig {
    /// Seconds allowed per itinerary node.
    pub per_hop_timer: f64,
    pub max_retries: u32,
    pub base_size: u32,
    pub result_size: u32,
    pub itinerary_cap: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            per_hop_timer: 2.0,
            max_retries: 2,
            base_size: 128,
            result_size: 32,
            itinerary_cap: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentQuery {
    pub metric: Metric,
    pub suspect: NodeId,
    pub window: (SimTime, SimTime),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Value(f64),
    NoData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileAgent {
    pub id: AgentId,
    pub origin_head: NodeId,
    /// Cooperative request this agent serves; shared by re-dispatches.
    pub request: u64,
    pub query: AgentQuery,
    pub itinerary: Vec<NodeId>,
    pub cursor: usize,
    pub results: Vec<(NodeId, Observation)>,
    pub created_at: SimTime,
}

impl MobileAgent {
    /// Where the agent should go next: the next itinerary node, or home.
    pub fn next_stop(&self) -> NodeId {
        self.itinerary
            .get(self.cursor)
            .copied()
            .unwrap_or(self.origin_head)
    }

    pub fn is_done(&self) -> bool {
        self.cursor >= self.itinerary.len()
    }

    /// Runs the query at `node` with the node's own observation and returns
    /// the next destination.
    pub fn execute_at(&mut self, node: NodeId, obs: Observation) -> Option<NodeId> {
        if self.itinerary.get(self.cursor) != Some(&node) {
            return None;
        }
        self.results.push((node, obs));
        self.cursor += 1;
        Some(self.next_stop())
    }

    pub fn wire_size(&self, cfg: &AgentConfig) -> u32 {
        cfg.base_size + cfg.result_size * self.results.len() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentStatus {
    InFlight,
    Returned,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRegistryEntry {
    pub agent_id: AgentId,
    pub request: u64,
    pub deadline: SimTime,
    pub retries: u32,
    pub status: AgentStatus,
    query: AgentQuery,
    itinerary: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TimeoutOutcome {
    /// Not due, or the agent already came back.
    Ignored,
    Redispatch(MobileAgent),
    Exhausted { request: u64, query: AgentQuery },
}

/// Per-head agent database.
#[derive(Debug, Clone, Default)]
pub struct AgentRegistry {
    cfg: AgentConfig,
    next_id: u64,
    entries: BTreeMap<AgentId, AgentRegistryEntry>,
    dispatched: BTreeMap<u64, u32>,
}

impl AgentRegistry {
    pub fn new(cfg: AgentConfig) -> Self {
        AgentRegistry {
            cfg,
            ..Default::default()
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Creates an agent for `request`. The itinerary must be non-empty and
    /// made of registered members.
    pub fn create_agent(
        &mut self,
        head: NodeId,
        request: u64,
        query: AgentQuery,
        itinerary: Vec<NodeId>,
        registered: &[NodeId],
        now: SimTime,
    ) -> Result<MobileAgent> {
        if itinerary.is_empty() {
            return Err(Error::EmptyItinerary);
        }
        if let Some(bad) = itinerary.iter().find(|n| !registered.contains(n)) {
            return Err(Error::UnregisteredItineraryNode(*bad));
        }
        Ok(self.spawn(head, request, query, itinerary, 0, now))
    }

    fn spawn(
        &mut self,
        head: NodeId,
        request: u64,
        query: AgentQuery,
        itinerary: Vec<NodeId>,
        retries: u32,
        now: SimTime,
    ) -> MobileAgent {
        self.next_id += 1;
        // Ids are unique per head; fold the head in so they are unique per run.
        let id = AgentId(((head.0 as u64) << 32) | self.next_id);
        let deadline = now + self.cfg.per_hop_timer * itinerary.len() as f64;
        self.entries.insert(
            id,
            AgentRegistryEntry {
                agent_id: id,
                request,
                deadline,
                retries,
                status: AgentStatus::InFlight,
                query,
                itinerary: itinerary.clone(),
            },
        );
        *self.dispatched.entry(request).or_insert(0) += 1;
        MobileAgent {
            id,
            origin_head: head,
            request,
            query,
            itinerary,
            cursor: 0,
            results: Vec::new(),
            created_at: now,
        }
    }

    pub fn entry(&self, id: AgentId) -> Option<&AgentRegistryEntry> {
        self.entries.get(&id)
    }

    pub fn in_flight(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.status == AgentStatus::InFlight)
            .count()
    }

    /// Agents dispatched so far for `request`, re-dispatches included.
    pub fn dispatched_for(&self, request: u64) -> u32 {
        self.dispatched.get(&request).copied().unwrap_or(0)
    }

    /// The agent came home. Returns its results, or `None` for unknown or
    /// late agents.
    pub fn on_return(&mut self, agent: &MobileAgent) -> Option<Vec<(NodeId, Observation)>> {
        let e = self.entries.get_mut(&agent.id)?;
        if e.status != AgentStatus::InFlight {
            return None;
        }
        e.status = AgentStatus::Returned;
        self.entries.remove(&agent.id);
        Some(agent.results.clone())
    }

    /// Deadline check for `id`.
    pub fn on_timeout(&mut self, id: AgentId, head: NodeId, now: SimTime) -> TimeoutOutcome {
        let Some(e) = self.entries.get_mut(&id) else {
            return TimeoutOutcome::Ignored;
        };
        if e.status != AgentStatus::InFlight || now < e.deadline {
            return TimeoutOutcome::Ignored;
        }
        e.status = AgentStatus::Lost;
        let (request, query, itinerary, retries) = (e.request, e.query, e.itinerary.clone(), e.retries);
        if retries < self.cfg.max_retries {
            TimeoutOutcome::Redispatch(self.spawn(head, request, query, itinerary, retries + 1, now))
        } else {
            TimeoutOutcome::Exhausted { request, query }
        }
    }
}

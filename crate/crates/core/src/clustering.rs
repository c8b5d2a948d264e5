//! Passive clustering.
//!
//! Cluster state rides on outgoing data as a [`PiggybackTag`]. The first node
//! that has traffic to send while hearing no head declares itself head, and
//! any unclustered node that hears a head claim joins it. Heads beacon over
//! two hops; every clustered node answers beacons it hears directly with an
//! [`Advert`] describing which heads it can hear, and heads derive one
//! gateway per adjacent head from those adverts (or a pair of distributed
//! gateways when no single bridge exists). Membership expires implicitly
//! when the head has been silent for the timeout.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::NodeId;

/// Bytes added to a data frame by the piggybacked tag.
pub const TAG_BYTES: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringConfig {
    pub beacon_period: f64,
    pub beacon_ttl: u8,
    pub timeout: f64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            beacon_period: 20.0,
            beacon_ttl: 2,
            timeout: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterRole {
    Unclustered,
    Head,
    Member,
    Gateway,
    DistributedGateway,
}

impl ClusterRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ClusterRole::Unclustered => "unclustered",
            ClusterRole::Head => "head",
            ClusterRole::Member => "member",
            ClusterRole::Gateway => "gateway",
            ClusterRole::DistributedGateway => "distributed_gateway",
        }
    }

    pub fn is_clustered_member(self) -> bool {
        matches!(
            self,
            ClusterRole::Member | ClusterRole::Gateway | ClusterRole::DistributedGateway
        )
    }
}

impl fmt::Display for ClusterRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PiggybackTag {
    pub sender_role: ClusterRole,
    pub sender_head: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub head_id: NodeId,
    pub member_ids: Vec<NodeId>,
    pub gateway_ids: Vec<NodeId>,
    pub distributed_gateway_ids: Vec<NodeId>,
    /// Subjects isolated by this head, so members that missed the isolation
    /// broadcast still converge.
    pub isolated: Vec<NodeId>,
}

/// A message flooded over a bounded number of hops, relayed once per
/// `(origin, counter)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoHop<M> {
    pub origin: NodeId,
    pub counter: u64,
    /// Hops remaining, including the one this copy is travelling.
    pub ttl: u8,
    pub body: M,
}

/// What a clustered node can hear, sent to heads it hears directly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Advert {
    pub from: NodeId,
    pub own_head: Option<NodeId>,
    pub heads_1hop: Vec<NodeId>,
    /// `(head, relay)` pairs for heads heard through one relay.
    pub heads_2hop: Vec<(NodeId, NodeId)>,
    pub neighbors: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayLink {
    /// The two heads hear each other directly.
    Direct,
    Gateway(NodeId),
    /// `(near lower-id head, near higher-id head)`.
    Distributed(NodeId, NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Listing {
    Gateway,
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Registration {
    New,
    Refreshed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterAction {
    /// This node just claimed headship.
    Declared,
    Joined {
        head: NodeId,
        hops: u8,
        path: Vec<NodeId>,
    },
    SendAdvert {
        path: Vec<NodeId>,
        advert: Advert,
    },
    RoleChanged {
        from: ClusterRole,
        to: ClusterRole,
    },
    Expired {
        head: NodeId,
    },
}

#[derive(Debug, Clone)]
pub struct ClusterState {
    id: NodeId,
    cfg: ClusteringConfig,
    role: ClusterRole,
    head_id: Option<NodeId>,
    head_last_heard: SimTime,
    tenure_start: Option<SimTime>,
    registry: BTreeMap<NodeId, SimTime>,
    adverts: BTreeMap<NodeId, (Advert, SimTime)>,
    gateway_map: BTreeMap<NodeId, GatewayLink>,
    heads_1hop: BTreeMap<NodeId, SimTime>,
    heads_2hop: BTreeMap<(NodeId, NodeId), SimTime>,
    neighbors: BTreeMap<NodeId, SimTime>,
    listings: BTreeMap<NodeId, Listing>,
    member_view: Vec<NodeId>,
    counter: u64,
    relayed: HashSet<(NodeId, u64)>,
}

impl ClusterState {
    pub fn new(id: NodeId, cfg: ClusteringConfig) -> Self {
        ClusterState {
            id,
            cfg,
            role: ClusterRole::Unclustered,
            head_id: None,
            head_last_heard: SimTime::ZERO,
            tenure_start: None,
            registry: BTreeMap::new(),
            adverts: BTreeMap::new(),
            gateway_map: BTreeMap::new(),
            heads_1hop: BTreeMap::new(),
            heads_2hop: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            listings: BTreeMap::new(),
            member_view: Vec::new(),
            counter: 0,
            relayed: HashSet::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &ClusteringConfig {
        &self.cfg
    }

    pub fn role(&self) -> ClusterRole {
        self.role
    }

    pub fn head_id(&self) -> Option<NodeId> {
        self.head_id
    }

    pub fn head_last_heard(&self) -> SimTime {
        self.head_last_heard
    }

    pub fn tenure_start(&self) -> Option<SimTime> {
        self.tenure_start
    }

    pub fn is_head(&self) -> bool {
        self.role == ClusterRole::Head
    }

    pub fn registry(&self) -> &BTreeMap<NodeId, SimTime> {
        &self.registry
    }

    pub fn members(&self) -> Vec<NodeId> {
        self.registry.keys().copied().collect()
    }

    pub fn gateway_map(&self) -> &BTreeMap<NodeId, GatewayLink> {
        &self.gateway_map
    }

    /// Cluster peers known from the last beacon of this node's head.
    pub fn member_view(&self) -> &[NodeId] {
        &self.member_view
    }

    pub fn tag(&self) -> PiggybackTag {
        PiggybackTag {
            sender_role: self.role,
            sender_head: self.head_id,
        }
    }

    /// Next counter for a two-hop broadcast originated here.
    pub fn next_counter(&mut self) -> u64 {
        self.counter += 1;
        self.counter
    }

    /// Returns true the first time a two-hop message is seen.
    pub fn first_sighting(&mut self, origin: NodeId, counter: u64) -> bool {
        origin != self.id && self.relayed.insert((origin, counter))
    }

    fn set_role(&mut self, to: ClusterRole, out: &mut Vec<ClusterAction>) {
        if self.role != to {
            out.push(ClusterAction::RoleChanged {
                from: self.role,
                to,
            });
            self.role = to;
        }
    }

    fn refresh_role(&mut self, out: &mut Vec<ClusterAction>) {
        if self.role == ClusterRole::Head || self.head_id.is_none() {
            return;
        }
        let to = if self.listings.values().any(|l| *l == Listing::Gateway) {
            ClusterRole::Gateway
        } else if self.listings.values().any(|l| *l == Listing::Distributed) {
            ClusterRole::DistributedGateway
        } else {
            ClusterRole::Member
        };
        self.set_role(to, out);
    }

    /// Claims headship. Only an unclustered node may declare.
    pub fn declare_head(&mut self, now: SimTime, out: &mut Vec<ClusterAction>) {
        if self.role != ClusterRole::Unclustered {
            return;
        }
        self.head_id = Some(self.id);
        self.head_last_heard = now;
        self.tenure_start = Some(now);
        self.registry.clear();
        self.adverts.clear();
        self.gateway_map.clear();
        self.listings.clear();
        self.set_role(ClusterRole::Head, out);
        out.push(ClusterAction::Declared);
    }

    /// The node has traffic to send; passive clustering declares on demand.
    pub fn on_traffic(&mut self, now: SimTime, out: &mut Vec<ClusterAction>) {
        if self.role == ClusterRole::Unclustered {
            self.declare_head(now, out);
        }
    }

    fn join(&mut self, head: NodeId, hops: u8, path: Vec<NodeId>, now: SimTime, out: &mut Vec<ClusterAction>) {
        self.head_id = Some(head);
        self.head_last_heard = now;
        self.listings.clear();
        self.member_view.clear();
        self.set_role(ClusterRole::Member, out);
        out.push(ClusterAction::Joined { head, hops, path });
    }

    /// A frame carrying `tag` was received or overheard from `sender`.
    pub fn on_overhear(
        &mut self,
        sender: NodeId,
        tag: PiggybackTag,
        now: SimTime,
        out: &mut Vec<ClusterAction>,
    ) {
        self.neighbors.insert(sender, now);
        let claims_head = tag.sender_role == ClusterRole::Head && tag.sender_head == Some(sender);
        if !claims_head {
            return;
        }
        self.heads_1hop.insert(sender, now);
        if self.head_id == Some(sender) {
            self.head_last_heard = now;
        }
        if self.role == ClusterRole::Unclustered {
            self.join(sender, 1, vec![sender], now, out);
        }
    }

    /// Any frame heard from `sender` proves it is a neighbor.
    pub fn note_neighbor(&mut self, sender: NodeId, now: SimTime) {
        self.neighbors.insert(sender, now);
    }

    /// Neighbors heard within the timeout, sorted.
    pub fn recent_neighbors(&self, now: SimTime) -> Vec<NodeId> {
        let timeout = self.cfg.timeout;
        self.neighbors
            .iter()
            .filter(|(_, t)| now.since(**t) < timeout)
            .map(|(n, _)| *n)
            .collect()
    }

    /// Builds the next beacon. Sweeps the registry and recomputes gateways.
    pub fn emit_beacon(&mut self, now: SimTime) -> Result<Beacon> {
        if !self.is_head() {
            return Err(Error::NotHead(self.id));
        }
        self.sweep(now);
        self.gateway_map = self.compute_gateways(now);
        let mut gateway_ids = BTreeSet::new();
        let mut distributed = BTreeSet::new();
        for link in self.gateway_map.values() {
            match *link {
                GatewayLink::Gateway(g) => {
                    gateway_ids.insert(g);
                }
                GatewayLink::Distributed(a, b) => {
                    distributed.insert(a);
                    distributed.insert(b);
                }
                GatewayLink::Direct => {}
            }
        }
        Ok(Beacon {
            head_id: self.id,
            member_ids: self.members(),
            gateway_ids: gateway_ids.into_iter().collect(),
            distributed_gateway_ids: distributed.into_iter().collect(),
            isolated: Vec::new(),
        })
    }

    /// A beacon from `beacon.head_id`, received from `from` with `ttl` hops
    /// still to go on this copy.
    pub fn on_beacon(
        &mut self,
        from: NodeId,
        ttl: u8,
        beacon: &Beacon,
        now: SimTime,
        out: &mut Vec<ClusterAction>,
    ) {
        let head = beacon.head_id;
        if head == self.id {
            return;
        }
        self.neighbors.insert(from, now);
        let hops = self.cfg.beacon_ttl.saturating_sub(ttl) + 1;
        if hops == 1 {
            self.heads_1hop.insert(head, now);
        } else {
            self.heads_2hop.insert((head, from), now);
        }
        if self.role == ClusterRole::Head {
            return;
        }
        if self.role == ClusterRole::Unclustered && hops <= 2 {
            let path = if hops == 1 { vec![head] } else { vec![from, head] };
            self.join(head, hops, path, now, out);
        }
        if self.head_id == Some(head) {
            self.head_last_heard = now;
            self.member_view = beacon.member_ids.clone();
        }
        if self.head_id.is_some() {
            let listing = if beacon.gateway_ids.contains(&self.id) {
                Some(Listing::Gateway)
            } else if beacon.distributed_gateway_ids.contains(&self.id) {
                Some(Listing::Distributed)
            } else {
                None
            };
            match listing {
                Some(l) => {
                    self.listings.insert(head, l);
                }
                None => {
                    self.listings.remove(&head);
                }
            }
            self.refresh_role(out);
        }
        let own = self.head_id == Some(head);
        if hops == 1 || own {
            let path = if hops == 1 { vec![head] } else { vec![from, head] };
            out.push(ClusterAction::SendAdvert {
                path,
                advert: self.advert(now),
            });
        }
    }

    pub fn advert(&self, now: SimTime) -> Advert {
        let fresh = |t: &SimTime| now.since(*t) < self.cfg.timeout;
        Advert {
            from: self.id,
            own_head: self.head_id,
            heads_1hop: self
                .heads_1hop
                .iter()
                .filter(|(_, t)| fresh(t))
                .map(|(h, _)| *h)
                .collect(),
            heads_2hop: self
                .heads_2hop
                .iter()
                .filter(|(_, t)| fresh(t))
                .map(|(k, _)| *k)
                .collect(),
            neighbors: self.recent_neighbors(now),
        }
    }

    /// Head side of member registration.
    pub fn register_member(&mut self, node: NodeId, now: SimTime) -> Result<Registration> {
        if !self.is_head() {
            return Err(Error::NotHead(self.id));
        }
        if node == self.id {
            return Ok(Registration::Refreshed);
        }
        Ok(match self.registry.insert(node, now) {
            Some(_) => Registration::Refreshed,
            None => Registration::New,
        })
    }

    pub fn deregister(&mut self, node: NodeId) -> bool {
        self.adverts.remove(&node);
        self.registry.remove(&node).is_some()
    }

    /// Head side: stores an advert; one from a member refreshes its
    /// registration. Returns true when the sender was newly registered.
    pub fn on_advert(&mut self, advert: Advert, now: SimTime) -> bool {
        if !self.is_head() {
            return false;
        }
        let mut newly = false;
        if advert.own_head == Some(self.id) {
            newly = matches!(self.register_member(advert.from, now), Ok(Registration::New));
        }
        self.adverts.insert(advert.from, (advert, now));
        newly
    }

    /// Members heard within the timeout according to the latest adverts.
    pub fn advert_of(&self, node: NodeId) -> Option<&Advert> {
        self.adverts.get(&node).map(|(a, _)| a)
    }

    fn sweep(&mut self, now: SimTime) {
        let timeout = self.cfg.timeout;
        self.registry.retain(|_, t| now.since(*t) < timeout);
        self.adverts.retain(|_, (_, t)| now.since(*t) < timeout);
    }

    /// Implicit time-out for members and for the head's registry.
    pub fn expire_stale(&mut self, now: SimTime, out: &mut Vec<ClusterAction>) {
        let timeout = self.cfg.timeout;
        self.heads_1hop.retain(|_, t| now.since(*t) < timeout);
        self.heads_2hop.retain(|_, t| now.since(*t) < timeout);
        self.neighbors.retain(|_, t| now.since(*t) < timeout);
        if self.role == ClusterRole::Head {
            self.sweep(now);
            return;
        }
        if let Some(head) = self.head_id {
            if now >= self.head_last_heard + timeout {
                self.head_id = None;
                self.listings.clear();
                self.member_view.clear();
                self.set_role(ClusterRole::Unclustered, out);
                out.push(ClusterAction::Expired { head });
            }
        }
    }

    /// When the current head binding goes stale if nothing is heard.
    pub fn expiry_deadline(&self) -> Option<SimTime> {
        match self.role {
            ClusterRole::Unclustered | ClusterRole::Head => None,
            _ => Some(self.head_last_heard + self.cfg.timeout),
        }
    }

    fn compute_gateways(&self, now: SimTime) -> BTreeMap<NodeId, GatewayLink> {
        let fresh_direct: BTreeSet<NodeId> = self
            .heads_1hop
            .iter()
            .filter(|(_, t)| now.since(**t) < self.cfg.timeout)
            .map(|(h, _)| *h)
            .collect();
        let adverts: Vec<&Advert> = self.adverts.values().map(|(a, _)| a).collect();
        select_gateways(self.id, &fresh_direct, &adverts)
    }

    /// Heads adjacent to this head through a gateway, a distributed-gateway
    /// pair, or direct radio contact.
    pub fn neighbor_heads(&self) -> BTreeSet<NodeId> {
        self.gateway_map.keys().copied().collect()
    }

    /// Called on the newly elected head when the old head's state arrives.
    pub fn take_over(
        &mut self,
        registry: &[(NodeId, SimTime)],
        old_head: NodeId,
        neighbor_heads: &[NodeId],
        now: SimTime,
        out: &mut Vec<ClusterAction>,
    ) {
        self.head_id = Some(self.id);
        self.head_last_heard = now;
        self.tenure_start = Some(now);
        self.listings.clear();
        self.registry = registry
            .iter()
            .filter(|(n, _)| *n != self.id)
            .copied()
            .collect();
        self.registry.insert(old_head, now);
        self.adverts.clear();
        self.gateway_map = neighbor_heads
            .iter()
            .filter(|h| **h != self.id)
            .map(|h| (*h, GatewayLink::Direct))
            .collect();
        self.set_role(ClusterRole::Head, out);
    }

    /// Called on the old head once the new head confirmed the handover, and
    /// on members told about the change.
    pub fn follow(&mut self, new_head: NodeId, now: SimTime, out: &mut Vec<ClusterAction>) {
        if new_head == self.id {
            return;
        }
        let was_head = self.role == ClusterRole::Head;
        self.head_id = Some(new_head);
        self.head_last_heard = now;
        if was_head {
            self.registry.clear();
            self.adverts.clear();
            self.gateway_map.clear();
            self.tenure_start = None;
            self.listings.clear();
            self.set_role(ClusterRole::Member, out);
        } else {
            self.refresh_role(out);
        }
    }
}

/// One gateway link per adjacent head, from the head's direct contacts and
/// the adverts it received. Deterministic: lowest-id bridge; for distributed
/// pairs the lexicographically smallest `(near lower head, near higher head)`.
pub fn select_gateways(
    head: NodeId,
    direct_heads: &BTreeSet<NodeId>,
    adverts: &[&Advert],
) -> BTreeMap<NodeId, GatewayLink> {
    let mut foreign: BTreeSet<NodeId> = direct_heads.clone();
    for a in adverts {
        foreign.extend(a.heads_1hop.iter().copied());
        foreign.extend(a.heads_2hop.iter().map(|(h, _)| *h));
    }
    foreign.remove(&head);
    let mut map = BTreeMap::new();
    for other in foreign {
        if direct_heads.contains(&other) {
            map.insert(other, GatewayLink::Direct);
            continue;
        }
        let bridges: BTreeSet<NodeId> = adverts
            .iter()
            .filter(|a| a.from != other && a.heads_1hop.contains(&head) && a.heads_1hop.contains(&other))
            .map(|a| a.from)
            .collect();
        if let Some(g) = bridges.first() {
            map.insert(other, GatewayLink::Gateway(*g));
            continue;
        }
        if let Some((a, b)) = select_distributed_gateways(head, other, adverts) {
            map.insert(other, GatewayLink::Distributed(a, b));
        }
    }
    map
}

/// Distributed-gateway pair for `head` and `other` when no single bridge
/// exists: three-hop paths `head - m1 - m2 - other` read off adverts from
/// nodes next to `head`. The pair is returned as `(near lower id head, near
/// higher id head)` so both heads converge on the same answer.
pub fn select_distributed_gateways(
    head: NodeId,
    other: NodeId,
    adverts: &[&Advert],
) -> Option<(NodeId, NodeId)> {
    let mut paths = BTreeSet::new();
    for a in adverts {
        if !a.heads_1hop.contains(&head) || a.from == other {
            continue;
        }
        for (h, relay) in &a.heads_2hop {
            if *h == other && *relay != head && *relay != a.from {
                let pair = if head < other {
                    (a.from, *relay)
                } else {
                    (*relay, a.from)
                };
                paths.insert(pair);
            }
        }
    }
    paths.first().copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn state(i: u32) -> ClusterState {
        ClusterState::new(n(i), ClusteringConfig::default())
    }

    fn head_tag(h: u32) -> PiggybackTag {
        PiggybackTag {
            sender_role: ClusterRole::Head,
            sender_head: Some(n(h)),
        }
    }

    #[test]
    fn tags_reflect_state() {
        let mut a = state(0);
        assert_eq!(
            a.tag(),
            PiggybackTag {
                sender_role: ClusterRole::Unclustered,
                sender_head: None
            }
        );
        let mut out = vec![];
        a.on_overhear(n(7), head_tag(7), t(1.0), &mut out);
        assert_eq!(
            a.tag(),
            PiggybackTag {
                sender_role: ClusterRole::Member,
                sender_head: Some(n(7))
            }
        );
    }

    #[test]
    fn first_declaration_wins() {
        let mut a = state(0);
        let mut b = state(1);
        let mut out = vec![];
        a.declare_head(t(1.0), &mut out);
        assert!(a.is_head());
        b.on_overhear(n(0), a.tag(), t(1.0), &mut out);
        assert_eq!(b.role(), ClusterRole::Member);
        assert_eq!(b.head_id(), Some(n(0)));
        // A later claim by C does not move B.
        b.on_overhear(n(2), head_tag(2), t(1.2), &mut out);
        assert_eq!(b.head_id(), Some(n(0)));
    }

    #[test]
    fn isolated_node_with_traffic_declares() {
        let mut a = state(4);
        let mut out = vec![];
        a.on_traffic(t(3.0), &mut out);
        assert!(a.is_head());
        assert!(out.contains(&ClusterAction::Declared));
    }

    #[test]
    fn member_tag_does_not_recruit() {
        let mut a = state(0);
        let mut out = vec![];
        a.on_overhear(
            n(3),
            PiggybackTag {
                sender_role: ClusterRole::Member,
                sender_head: Some(n(9)),
            },
            t(0.0),
            &mut out,
        );
        assert_eq!(a.role(), ClusterRole::Unclustered);
    }

    #[test]
    fn registration_counts_and_refreshes() {
        let mut h = state(0);
        let mut out = vec![];
        h.declare_head(t(0.0), &mut out);
        assert_eq!(h.register_member(n(1), t(1.0)).unwrap(), Registration::New);
        assert_eq!(h.registry().len(), 1);
        assert_eq!(h.register_member(n(1), t(5.0)).unwrap(), Registration::Refreshed);
        assert_eq!(h.registry().len(), 1);
        assert_eq!(h.registry()[&n(1)], t(5.0));
        h.register_member(n(2), t(5.0)).unwrap();
        h.register_member(n(3), t(5.0)).unwrap();
        let b = h.emit_beacon(t(20.0)).unwrap();
        assert_eq!(b.member_ids, vec![n(1), n(2), n(3)]);
    }

    #[test]
    fn beacon_requires_head() {
        let mut a = state(0);
        assert_eq!(a.emit_beacon(t(0.0)), Err(Error::NotHead(n(0))));
    }

    fn beacon_from(h: u32) -> Beacon {
        Beacon {
            head_id: n(h),
            member_ids: vec![],
            gateway_ids: vec![],
            distributed_gateway_ids: vec![],
            isolated: vec![],
        }
    }

    #[test]
    fn two_hop_beacon_recruits_through_relay() {
        let mut c = state(2);
        let mut out = vec![];
        c.on_beacon(n(1), 1, &beacon_from(0), t(20.0), &mut out);
        assert_eq!(c.head_id(), Some(n(0)));
        assert!(out.iter().any(|a| matches!(a, ClusterAction::Joined { hops: 2, path, .. } if path == &vec![n(1), n(0)])));
    }

    #[test]
    fn expiry_at_timeout() {
        let mut b = state(1);
        let mut out = vec![];
        b.on_overhear(n(0), head_tag(0), t(0.0), &mut out);
        b.expire_stale(t(59.0), &mut out);
        assert_eq!(b.role(), ClusterRole::Member);
        b.expire_stale(t(61.0), &mut out);
        assert_eq!(b.role(), ClusterRole::Unclustered);
        assert!(out.contains(&ClusterAction::Expired { head: n(0) }));
    }

    #[test]
    fn head_drops_silent_members() {
        let mut h = state(0);
        let mut out = vec![];
        h.declare_head(t(0.0), &mut out);
        h.register_member(n(1), t(0.0)).unwrap();
        h.register_member(n(2), t(30.0)).unwrap();
        h.expire_stale(t(61.0), &mut out);
        assert_eq!(h.members(), vec![n(2)]);
    }

    fn advert(from: u32, h1: &[u32], h2: &[(u32, u32)]) -> Advert {
        Advert {
            from: n(from),
            own_head: None,
            heads_1hop: h1.iter().map(|&i| n(i)).collect(),
            heads_2hop: h2.iter().map(|&(h, r)| (n(h), n(r))).collect(),
            neighbors: vec![],
        }
    }

    #[test]
    fn sole_bridge_is_gateway() {
        let a = advert(5, &[0, 9], &[]);
        let map = select_gateways(n(0), &BTreeSet::new(), &[&a]);
        assert_eq!(map[&n(9)], GatewayLink::Gateway(n(5)));
    }

    #[test]
    fn lowest_id_bridge_wins() {
        let a = advert(7, &[0, 9], &[]);
        let b = advert(3, &[0, 9], &[]);
        let map = select_gateways(n(0), &BTreeSet::new(), &[&a, &b]);
        assert_eq!(map[&n(9)], GatewayLink::Gateway(n(3)));
    }

    #[test]
    fn distributed_pair_on_three_hop_line() {
        // H1(0) - a(1) - b(2) - H2(3)
        let from_h1 = advert(1, &[0], &[(3, 2)]);
        let from_h2 = advert(2, &[3], &[(0, 1)]);
        let m1 = select_gateways(n(0), &BTreeSet::new(), &[&from_h1]);
        let m2 = select_gateways(n(3), &BTreeSet::new(), &[&from_h2]);
        assert_eq!(m1[&n(3)], GatewayLink::Distributed(n(1), n(2)));
        assert_eq!(m2[&n(0)], GatewayLink::Distributed(n(1), n(2)));
    }

    #[test]
    fn distributed_pair_lexicographic() {
        let p = advert(2, &[0], &[(20, 9)]);
        let q = advert(4, &[0], &[(20, 5)]);
        assert_eq!(select_distributed_gateways(n(0), n(20), &[&q, &p]), Some((n(2), n(9))));
    }

    #[test]
    fn four_hops_apart_not_adjacent() {
        // Nobody next to head 0 hears head 20 even at two hops.
        let p = advert(2, &[0], &[]);
        let map = select_gateways(n(0), &BTreeSet::new(), &[&p]);
        assert!(map.is_empty());
        assert_eq!(select_distributed_gateways(n(0), n(20), &[&p]), None);
    }

    #[test]
    fn neighbor_heads_of_bridged_clusters() {
        let mut h = state(0);
        let mut out = vec![];
        h.declare_head(t(0.0), &mut out);
        assert!(h.neighbor_heads().is_empty());
        let mut a = advert(1, &[0, 2], &[]);
        a.own_head = Some(n(0));
        h.on_advert(a, t(1.0));
        h.emit_beacon(t(20.0)).unwrap();
        assert_eq!(h.neighbor_heads(), BTreeSet::from([n(2)]));
    }

    #[test]
    fn gateway_listing_sets_role() {
        let mut g = state(1);
        let mut out = vec![];
        g.on_overhear(n(0), head_tag(0), t(0.0), &mut out);
        let mut b = beacon_from(0);
        b.gateway_ids = vec![n(1)];
        g.on_beacon(n(0), 2, &b, t(20.0), &mut out);
        assert_eq!(g.role(), ClusterRole::Gateway);
        g.on_beacon(n(0), 2, &beacon_from(0), t(40.0), &mut out);
        assert_eq!(g.role(), ClusterRole::Member);
    }

    #[test]
    fn relay_dedup() {
        let mut a = state(1);
        assert!(a.first_sighting(n(0), 1));
        assert!(!a.first_sighting(n(0), 1));
        assert!(a.first_sighting(n(0), 2));
    }
}

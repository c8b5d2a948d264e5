//! Minimal reactive routing with destination sequence numbers, plus CBR
//! traffic descriptors.
//!
//! A [`Router`] is a per-node state machine. Handlers push [`RouteAction`]s
//! into an output vector; the caller turns them into frames and timers.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::kernel::SimTime;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingConfig {
    pub route_lifetime: f64,
    pub rreq_ttl: u32,
    pub retry_interval: f64,
    pub max_retries: u32,
    pub buffer_capacity: usize,
    /// Let intermediate nodes with a fresh enough route answer RREQs.
    pub intermediate_reply: bool,
    /// Upper bound of the uniform delay before re-broadcasting a RREQ.
    pub rebroadcast_jitter: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            route_lifetime: 30.0,
            rreq_ttl: 10,
            retry_interval: 2.0,
            max_retries: 3,
            buffer_capacity: 64,
            intermediate_reply: true,
            rebroadcast_jitter: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteEntry {
    pub dst: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dst_seq: u32,
    pub expires_at: SimTime,
}

impl RouteEntry {
    pub fn is_valid(&self, now: SimTime) -> bool {
        now < self.expires_at
    }
}

/// At most one entry per destination. Expired entries are never returned.
#[derive(Debug, Clone, Default)]
pub struct RouteTable {
    entries: BTreeMap<NodeId, RouteEntry>,
    last_seq: BTreeMap<NodeId, u32>,
}

impl RouteTable {
    pub fn lookup(&self, dst: NodeId, now: SimTime) -> Option<&RouteEntry> {
        self.entries.get(&dst).filter(|e| e.is_valid(now))
    }

    /// Last sequence number this node learned for `dst`, even if the route
    /// has since gone away.
    pub fn known_seq(&self, dst: NodeId) -> Option<u32> {
        self.last_seq.get(&dst).copied()
    }

    /// Installs `cand` when there is no valid entry, when its sequence number
    /// is newer, or when it is equally fresh but shorter. Returns whether the
    /// table changed.
    pub fn offer(&mut self, cand: RouteEntry, now: SimTime) -> bool {
        let replace = match self.lookup(cand.dst, now) {
            None => true,
            Some(cur) => {
                cand.dst_seq > cur.dst_seq
                    || (cand.dst_seq == cur.dst_seq && cand.hop_count < cur.hop_count)
            }
        };
        if replace {
            self.entries.insert(cand.dst, cand);
            let seq = self.last_seq.entry(cand.dst).or_insert(cand.dst_seq);
            *seq = (*seq).max(cand.dst_seq);
        }
        replace
    }

    pub fn invalidate(&mut self, dst: NodeId) -> bool {
        self.entries.remove(&dst).is_some()
    }

    /// Drops every route whose next hop is `via`; returns their destinations.
    pub fn invalidate_via(&mut self, via: NodeId) -> Vec<NodeId> {
        let gone: Vec<NodeId> = self
            .entries
            .values()
            .filter(|e| e.next_hop == via)
            .map(|e| e.dst)
            .collect();
        for d in &gone {
            self.entries.remove(d);
        }
        gone
    }

    pub fn valid_entries(&self, now: SimTime) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values().filter(move |e| e.is_valid(now))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RreqId {
    pub origin: NodeId,
    pub counter: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteRequest {
    pub id: RreqId,
    pub target: NodeId,
    pub origin_seq: u32,
    /// Origin's last known sequence number for `target`.
    pub dst_seq: Option<u32>,
    pub hop_count: u32,
}

impl RouteRequest {
    pub fn origin(&self) -> NodeId {
        self.id.origin
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteReply {
    pub origin: NodeId,
    pub target: NodeId,
    pub target_seq: u32,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<B> {
    pub origin: NodeId,
    pub dst: NodeId,
    /// Unique per origin.
    pub pid: u64,
    pub size: u32,
    pub body: B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbrFlow {
    pub src: NodeId,
    pub dst: NodeId,
    /// Packets per second.
    pub rate: f64,
    pub size: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

impl CbrFlow {
    /// Emission times in `[start, stop)` spaced `1 / rate` apart.
    pub fn emission_times(&self) -> impl Iterator<Item = SimTime> + '_ {
        let period = 1.0 / self.rate;
        (0u64..)
            .map(move |k| self.start + k as f64 * period)
            .take_while(move |t| *t < self.stop)
    }
}

/// FIFO that drops its oldest element on overflow.
#[derive(Debug, Clone)]
pub struct SendBuffer<T> {
    capacity: usize,
    queue: VecDeque<T>,
}

impl<T> SendBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        SendBuffer {
            capacity,
            queue: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, item: T) -> Option<T> {
        let dropped = if self.queue.len() >= self.capacity {
            self.queue.pop_front()
        } else {
            None
        };
        self.queue.push_back(item);
        dropped
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Removes and returns every element matching `pred`, preserving order.
    pub fn take_where(&mut self, mut pred: impl FnMut(&T) -> bool) -> Vec<T> {
        let mut taken = Vec::new();
        let mut kept = VecDeque::with_capacity(self.queue.len());
        for item in self.queue.drain(..) {
            if pred(&item) {
                taken.push(item);
            } else {
                kept.push_back(item);
            }
        }
        self.queue = kept;
        taken
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.queue.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    BufferOverflow,
    NoRoute,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RouteAction<B> {
    /// New RREQ from this node; broadcast immediately.
    Originate(RouteRequest),
    /// Relay of someone else's RREQ; broadcast after a jitter.
    Rebroadcast(RouteRequest),
    SendRrep {
        next_hop: NodeId,
        rrep: RouteReply,
    },
    Transmit {
        next_hop: NodeId,
        packet: Packet<B>,
    },
    Deliver(Packet<B>),
    Dropped {
        packet: Packet<B>,
        reason: DropReason,
    },
    ScheduleRetry {
        target: NodeId,
        at: SimTime,
    },
    RouteChanged(RouteEntry),
    /// A relayed packet had no route; tell upstream nodes `dst` is gone.
    RouteError {
        dst: NodeId,
        packet: Packet<B>,
    },
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    retries: u32,
}

#[derive(Debug, Clone)]
pub struct Router<B> {
    id: NodeId,
    cfg: RoutingConfig,
    own_seq: u32,
    rreq_counter: u32,
    pub table: RouteTable,
    seen: HashSet<RreqId>,
    buffer: SendBuffer<Packet<B>>,
    pending: BTreeMap<NodeId, Pending>,
}

impl<B: Clone> Router<B> {
    pub fn new(id: NodeId, cfg: RoutingConfig) -> Self {
        Router {
            id,
            cfg,
            own_seq: 0,
            rreq_counter: 0,
            table: RouteTable::default(),
            seen: HashSet::new(),
            buffer: SendBuffer::new(cfg.buffer_capacity),
            pending: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn own_seq(&self) -> u32 {
        self.own_seq
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_discovering(&self, target: NodeId) -> bool {
        self.pending.contains_key(&target)
    }

    /// Next fresh request id without sending anything; used by flooding
    /// attackers that forge many requests.
    pub fn next_rreq(&mut self, target: NodeId) -> RouteRequest {
        self.rreq_counter += 1;
        let id = RreqId {
            origin: self.id,
            counter: self.rreq_counter,
        };
        self.seen.insert(id);
        RouteRequest {
            id,
            target,
            origin_seq: self.own_seq,
            dst_seq: self.table.known_seq(target),
            hop_count: 0,
        }
    }

    /// Sends a packet this node originated or must relay. Without a valid
    /// route the packet is buffered and one discovery is started per target.
    pub fn send(&mut self, packet: Packet<B>, now: SimTime, out: &mut Vec<RouteAction<B>>) {
        if packet.dst == self.id {
            out.push(RouteAction::Deliver(packet));
            return;
        }
        if let Some(route) = self.table.lookup(packet.dst, now) {
            out.push(RouteAction::Transmit {
                next_hop: route.next_hop,
                packet,
            });
            return;
        }
        let target = packet.dst;
        if let Some(old) = self.buffer.push(packet) {
            out.push(RouteAction::Dropped {
                packet: old,
                reason: DropReason::BufferOverflow,
            });
        }
        if let std::collections::btree_map::Entry::Vacant(e) = self.pending.entry(target) {
            e.insert(Pending { retries: 0 });
            self.originate_rreq(target, now, out);
        }
    }

    fn originate_rreq(&mut self, target: NodeId, now: SimTime, out: &mut Vec<RouteAction<B>>) {
        self.own_seq += 1;
        let rreq = self.next_rreq(target);
        out.push(RouteAction::Originate(rreq));
        out.push(RouteAction::ScheduleRetry {
            target,
            at: now + self.cfg.retry_interval,
        });
    }

    /// Retry timer for a pending discovery.
    pub fn on_retry(&mut self, target: NodeId, now: SimTime, out: &mut Vec<RouteAction<B>>) {
        let Some(p) = self.pending.get(&target).copied() else {
            return;
        };
        if self.table.lookup(target, now).is_some() {
            self.pending.remove(&target);
            self.flush(target, now, out);
            return;
        }
        let waiting = self.buffer.iter().any(|pk| pk.dst == target);
        if !waiting {
            self.pending.remove(&target);
            return;
        }
        if p.retries >= self.cfg.max_retries {
            self.pending.remove(&target);
            for packet in self.buffer.take_where(|pk| pk.dst == target) {
                out.push(RouteAction::Dropped {
                    packet,
                    reason: DropReason::NoRoute,
                });
            }
            return;
        }
        self.pending.insert(
            target,
            Pending {
                retries: p.retries + 1,
            },
        );
        self.originate_rreq(target, now, out);
    }

    fn install(&mut self, cand: RouteEntry, now: SimTime, out: &mut Vec<RouteAction<B>>) -> bool {
        if cand.dst == self.id {
            return false;
        }
        let changed = self.table.offer(cand, now);
        if changed {
            out.push(RouteAction::RouteChanged(cand));
            self.pending.remove(&cand.dst);
            self.flush(cand.dst, now, out);
        }
        changed
    }

    fn flush(&mut self, dst: NodeId, now: SimTime, out: &mut Vec<RouteAction<B>>) {
        let Some(route) = self.table.lookup(dst, now).copied() else {
            return;
        };
        for packet in self.buffer.take_where(|pk| pk.dst == dst) {
            out.push(RouteAction::Transmit {
                next_hop: route.next_hop,
                packet,
            });
        }
    }

    pub fn has_seen(&self, id: RreqId) -> bool {
        self.seen.contains(&id)
    }

    pub fn handle_rreq(
        &mut self,
        from: NodeId,
        rreq: RouteRequest,
        now: SimTime,
        out: &mut Vec<RouteAction<B>>,
    ) {
        if rreq.origin() == self.id || !self.seen.insert(rreq.id) {
            return;
        }
        let hops = rreq.hop_count + 1;
        self.install(
            RouteEntry {
                dst: rreq.origin(),
                next_hop: from,
                hop_count: hops,
                dst_seq: rreq.origin_seq,
                expires_at: now + self.cfg.route_lifetime,
            },
            now,
            out,
        );
        if rreq.target == self.id {
            out.push(RouteAction::SendRrep {
                next_hop: from,
                rrep: RouteReply {
                    origin: rreq.origin(),
                    target: self.id,
                    target_seq: self.own_seq,
                    hop_count: 0,
                },
            });
            return;
        }
        if self.cfg.intermediate_reply {
            if let Some(route) = self.table.lookup(rreq.target, now) {
                let fresh = rreq.dst_seq.is_none_or(|s| route.dst_seq >= s);
                if fresh && route.next_hop != from {
                    out.push(RouteAction::SendRrep {
                        next_hop: from,
                        rrep: RouteReply {
                            origin: rreq.origin(),
                            target: rreq.target,
                            target_seq: route.dst_seq,
                            hop_count: route.hop_count,
                        },
                    });
                    return;
                }
            }
        }
        if hops < self.cfg.rreq_ttl {
            out.push(RouteAction::Rebroadcast(RouteRequest {
                hop_count: hops,
                ..rreq
            }));
        }
    }

    pub fn handle_rrep(
        &mut self,
        from: NodeId,
        rrep: RouteReply,
        now: SimTime,
        out: &mut Vec<RouteAction<B>>,
    ) {
        let hops = rrep.hop_count + 1;
        self.install(
            RouteEntry {
                dst: rrep.target,
                next_hop: from,
                hop_count: hops,
                dst_seq: rrep.target_seq,
                expires_at: now + self.cfg.route_lifetime,
            },
            now,
            out,
        );
        if rrep.origin == self.id {
            return;
        }
        let Some(back) = self.table.lookup(rrep.origin, now) else {
            return;
        };
        out.push(RouteAction::SendRrep {
            next_hop: back.next_hop,
            rrep: RouteReply {
                hop_count: hops,
                ..rrep
            },
        });
    }

    /// Relays a packet for someone else. Relays do not buffer: without a
    /// valid route the packet is dropped and a route error goes upstream.
    pub fn forward(&mut self, packet: Packet<B>, now: SimTime, out: &mut Vec<RouteAction<B>>) {
        if packet.dst == self.id || packet.origin == self.id {
            self.send(packet, now, out);
            return;
        }
        match self.table.lookup(packet.dst, now) {
            Some(route) => out.push(RouteAction::Transmit {
                next_hop: route.next_hop,
                packet,
            }),
            None => out.push(RouteAction::RouteError {
                dst: packet.dst,
                packet,
            }),
        }
    }

    /// The link to `next_hop` broke while sending `packet`: forget routes
    /// through it and re-route the packet.
    pub fn on_link_failure(
        &mut self,
        next_hop: NodeId,
        packet: Option<Packet<B>>,
        now: SimTime,
        out: &mut Vec<RouteAction<B>>,
    ) {
        self.table.invalidate_via(next_hop);
        if let Some(p) = packet {
            self.forward(p, now, out);
        }
    }

    /// Route error from neighbor `from`: drop routes to `dsts` through it.
    pub fn on_rerr(&mut self, from: NodeId, dsts: &[NodeId], now: SimTime) -> Vec<NodeId> {
        let mut gone = Vec::new();
        for d in dsts {
            if self.table.lookup(*d, now).is_some_and(|r| r.next_hop == from) {
                self.table.invalidate(*d);
                gone.push(*d);
            }
        }
        gone
    }

    /// Drops all routes through `node`, e.g. after it was isolated.
    pub fn forget_via(&mut self, node: NodeId) -> Vec<NodeId> {
        self.table.invalidate_via(node)
    }

    /// Removes buffered packets matching `pred` (used when isolating a node).
    pub fn purge_buffer(&mut self, pred: impl FnMut(&Packet<B>) -> bool) -> Vec<Packet<B>> {
        self.buffer.take_where(pred)
    }
}

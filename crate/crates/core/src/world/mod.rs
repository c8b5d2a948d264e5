//! The simulated network: every node's protocol state wired onto the radio
//! model and driven by the event kernel.
//!
//! [`Simulation`] owns the kernel, the radio, one [`Node`] per id and the
//! trace. Frames are delivered when their transmission ends; unicast frames
//! are overheard by every other node in range, which is what the watchdog
//! and the passive-clustering tag rely on.

mod ids;
pub mod msg;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;

use crate::agents::{AgentId, AgentRegistry};
use crate::attacks::{self, AttackKind, AttackTable};
use crate::clustering::{ClusterAction, ClusterState, TwoHop};
use crate::detection::{Alert, Detector, DetectorKind, Finding, Handoff, Metric, Suspicion};
use crate::error::Result;
use crate::harness::config::ScenarioConfig;
use crate::harness::trace::{List, Trace};
use crate::kernel::{Kernel, RngStream, RngStreams, SimTime, Target};
use crate::net::{Dest, Enqueued, Frame, Mobility, NetModel, Position, Reception, TxPlan};
use crate::response::{enforce, Blocklist, Enforcement, ResponseKind, ResponsePolicy};
use crate::routing::{CbrFlow, Packet, RouteAction, RouteRequest, Router};
use crate::trust::{election_period, Ballot, TrustTable};
use crate::NodeId;

pub use msg::{Body, Class, ClusterMsg, Msg, PathMsg};

#[derive(Debug, Clone)]
enum Ev {
    TxEnd(Box<TxPlan<Msg>>),
    Cbr { flow: usize, k: u64 },
    RouteRetry { node: NodeId, target: NodeId },
    RreqRelay { node: NodeId, rreq: RouteRequest },
    Beacon { node: NodeId, tenure: u64 },
    ExpireCheck { node: NodeId },
    WindowEval { k: u64 },
    ReportRetry { node: NodeId, id: u64 },
    AgentTimeout { node: NodeId, agent: AgentId },
    ElectionStart { node: NodeId, tenure: u64 },
    BallotClose { node: NodeId, epoch: u64 },
    HandoverRetry { node: NodeId, epoch: u64 },
    AttackTick { node: NodeId, k: u64 },
    AttackPick,
}

#[derive(Debug, Clone)]
struct PendingReport {
    alert: Alert,
    head: NodeId,
    tries: u32,
}

#[derive(Debug, Clone)]
struct CoopRequest {
    suspicion: Suspicion,
    requester: NodeId,
}

#[derive(Debug, Clone)]
struct PendingHandover {
    epoch: u64,
    to: NodeId,
    tries: u32,
    msg: msg::Handover,
}

/// Everything one node runs.
#[derive(Debug)]
pub struct Node {
    pub id: NodeId,
    pub router: Router<Body>,
    pub cluster: ClusterState,
    pub detector: Detector,
    pub trust: TrustTable,
    pub blocklist: Blocklist,
    pub policy: ResponsePolicy,
    pub agents: AgentRegistry,
    tenure: u64,
    expire_armed: bool,
    reports: BTreeMap<u64, PendingReport>,
    next_report: u64,
    logged_reports: BTreeSet<(NodeId, NodeId, u64, String)>,
    coop: BTreeMap<u64, CoopRequest>,
    coop_open: BTreeSet<(NodeId, Metric)>,
    next_request: u64,
    epoch: u64,
    ballots: Vec<Ballot>,
    handover: Option<PendingHandover>,
    taken_over: BTreeSet<(NodeId, u64)>,
}

impl Node {
    fn new(id: NodeId, cfg: &ScenarioConfig) -> Self {
        Node {
            id,
            router: Router::new(id, cfg.routing),
            cluster: ClusterState::new(id, cfg.clustering),
            detector: Detector::new(id, cfg.detection_config()),
            trust: TrustTable::new(cfg.trust),
            blocklist: Blocklist::new(id, cfg.response.block_ttl),
            policy: ResponsePolicy::new(cfg.response),
            agents: AgentRegistry::new(cfg.agents),
            tenure: 0,
            expire_armed: false,
            reports: BTreeMap::new(),
            next_report: 0,
            logged_reports: BTreeSet::new(),
            coop: BTreeMap::new(),
            coop_open: BTreeSet::new(),
            next_request: 0,
            epoch: 0,
            ballots: Vec::new(),
            handover: None,
            taken_over: BTreeSet::new(),
        }
    }

    /// Election epoch of the current or last election this node ran.
    pub fn election_epoch(&self) -> u64 {
        self.epoch
    }

    /// Reports sent to the head and not acknowledged yet.
    pub fn pending_reports(&self) -> usize {
        self.reports.len()
    }
}

/// One simulation run.
pub struct Simulation {
    cfg: ScenarioConfig,
    seed: u64,
    kernel: Kernel<Ev>,
    net: NetModel<Msg>,
    nodes: Vec<Node>,
    attacks: AttackTable,
    flows: Vec<CbrFlow>,
    rngs: RngStreams,
    trace: Trace,
    next_pid: u64,
    election_period: f64,
    /// Transit forwards per node since this time, while relay placement is
    /// pending.
    relay_watch: Option<SimTime>,
    relay_counts: Vec<u32>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.node_count;
        let mut rngs = RngStreams::new(seed);
        let area = cfg.area();
        let initial = match cfg.fixed_positions() {
            Some(p) => p,
            None => {
                let rng = rngs.rng("placement");
                (0..n).map(|_| area.random_point(rng)).collect()
            }
        };
        let streams = (0..n)
            .map(|i| RngStream::derive(seed, &format!("mobility.{i}")))
            .collect();
        let model = cfg.mobility();
        let mobility = Mobility::new(area, model, initial, streams);
        let net = NetModel::new(mobility, cfg.radio, RngStream::derive(seed, "radio.loss"));
        let nodes = (0..n).map(|i| Node::new(NodeId(i as u32), cfg)).collect();

        let end = SimTime::from_secs(cfg.end());
        let flows: Vec<CbrFlow> = if cfg.flows.is_empty() {
            let rng = rngs.rng("traffic");
            (0..if n >= 2 { cfg.flow_count } else { 0 })
                .map(|_| {
                    let src = rng.random_range(0..n as u32);
                    let mut dst = rng.random_range(0..n as u32 - 1);
                    if dst >= src {
                        dst += 1;
                    }
                    let start = cfg.flow_start_jitter * rng.random::<f64>();
                    CbrFlow {
                        src: NodeId(src),
                        dst: NodeId(dst),
                        rate: cfg.traffic_rate,
                        size: cfg.pkt_size,
                        start: SimTime::from_secs(start),
                        stop: end,
                    }
                })
                .collect()
        } else {
            cfg.explicit_flows()
                .into_iter()
                .map(|f| CbrFlow {
                    src: f.src,
                    dst: f.dst,
                    rate: cfg.traffic_rate,
                    size: cfg.pkt_size,
                    start: SimTime::from_secs(f.start),
                    stop: end,
                })
                .collect()
        };

        let relay_placement = cfg.has_attack() && cfg.attack_nodes.is_empty() && cfg.attack_placement == "relay";
        let election_period = election_period(cfg.election.base_period, model.mean_speed());
        let mut sim = Simulation {
            cfg: cfg.clone(),
            seed,
            kernel: Kernel::new(),
            net,
            nodes,
            attacks: AttackTable::new(n),
            flows,
            rngs,
            trace: Trace::new(),
            next_pid: 0,
            election_period,
            relay_watch: None,
            relay_counts: vec![0; n],
        };
        sim.start();
        if cfg.has_attack() {
            let start = SimTime::from_secs(cfg.attack_window().0);
            if relay_placement {
                sim.relay_watch = Some(SimTime::from_secs((start.secs() - cfg.detection.window).max(0.0)));
                sim.at(start, Target::Global, Ev::AttackPick);
            } else {
                let attackers: Vec<NodeId> = if cfg.attack_nodes.is_empty() {
                    let mut picked: Vec<u32> = sample(sim.rngs.rng("attack.select"), n, cfg.attack_count)
                        .into_iter()
                        .map(|i| i as u32)
                        .collect();
                    picked.sort();
                    picked.into_iter().map(NodeId).collect()
                } else {
                    cfg.attack_nodes.iter().map(|i| NodeId(*i)).collect()
                };
                sim.install_attackers(&attackers)?;
            }
        }
        Ok(sim)
    }

    fn start(&mut self) {
        let cfg = &self.cfg;
        self.trace
            .rec(SimTime::ZERO, None, "meta", "run")
            .f("seed", self.seed)
            .f("nodes", cfg.node_count)
            .f("warmup", cfg.warmup)
            .f("test", cfg.test)
            .f("window", cfg.detection.window)
            .f("grace", cfg.grace)
            .f("attack", &cfg.attack_kind);
        for (i, f) in self.flows.iter().enumerate() {
            self.trace
                .rec(SimTime::ZERO, None, "meta", "flow")
                .f("flow", i)
                .f("src", f.src)
                .f("dst", f.dst)
                .f("start", f.start.secs());
        }
        for i in 0..self.flows.len() {
            let t = self.flows[i].start;
            if t < self.flows[i].stop {
                self.at(t, Target::Global, Ev::Cbr { flow: i, k: 0 });
            }
        }
        let w = self.cfg.detection.window;
        self.at(
            SimTime::from_secs(w + self.cfg.detection.watchdog_deadline),
            Target::Global,
            Ev::WindowEval { k: 0 },
        );
    }

    fn install_attackers(&mut self, attackers: &[NodeId]) -> Result<()> {
        let now = self.now();
        let victim = match self.cfg.sd_victim {
            Some(v) => NodeId(v),
            None => {
                let others: Vec<NodeId> = (0..self.nodes.len() as u32)
                    .map(NodeId)
                    .filter(|x| !attackers.contains(x))
                    .collect();
                let rng = self.rngs.rng("attack.victim");
                others[rng.random_range(0..others.len())]
            }
        };
        for a in attackers {
            let Some(s) = self.cfg.schedule_for(*a, victim) else {
                continue;
            };
            self.attacks.install(s)?;
            let mut r = self
                .trace
                .rec(now, Some(s.node), "attack", "install")
                .f("kind", s.kind.name())
                .f("label", s.kind.label())
                .f("start", s.start.secs())
                .f("stop", s.stop.secs());
            match s.kind {
                AttackKind::Flooding { rreq_rate } => r = r.f("rate", rreq_rate),
                AttackKind::SleepDeprivation { victim, rate } => r = r.f("victim", victim).f("rate", rate),
                AttackKind::PacketDrop { drop_prob } => r = r.f("drop_prob", drop_prob),
                AttackKind::Blackhole => {}
            }
            drop(r);
            if let Some(t) = s.emission(0) {
                self.at(t, Target::Node(s.node), Ev::AttackTick { node: s.node, k: 0 });
            }
        }
        Ok(())
    }

    /// Relay placement: the nodes that forwarded the most transit data in the
    /// window before the attack, topped up at random if too few relayed.
    fn pick_relay_attackers(&mut self) {
        self.relay_watch = None;
        let want = self.cfg.attack_count;
        let mut ranked: Vec<(u32, NodeId)> = self
            .relay_counts
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(i, c)| (*c, NodeId(i as u32)))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut attackers: Vec<NodeId> = ranked.into_iter().take(want).map(|(_, n)| n).collect();
        let n = self.nodes.len();
        let rng = self.rngs.rng("attack.select");
        while attackers.len() < want {
            let c = NodeId(rng.random_range(0..n as u32));
            if !attackers.contains(&c) {
                attackers.push(c);
            }
        }
        attackers.sort();
        self.install_attackers(&attackers)
            .expect("configuration was validated");
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn end(&self) -> SimTime {
        SimTime::from_secs(self.cfg.end())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn attackers(&self) -> Vec<NodeId> {
        self.attacks.attackers()
    }

    pub fn attacks(&self) -> &AttackTable {
        &self.attacks
    }

    pub fn positions(&mut self) -> Vec<Position> {
        let now = self.now();
        self.net.positions(now).to_vec()
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn events_fired(&self) -> u64 {
        self.kernel.fired()
    }

    /// Runs every event up to `t` (capped at the configured end).
    pub fn run_until(&mut self, t: SimTime) {
        let t = t.min(self.end());
        while let Some(ev) = self.kernel.pop_due(t) {
            self.handle(ev.payload);
        }
        self.kernel.advance_to(t);
    }

    /// Runs to the end of the scenario and closes the trace.
    pub fn run(&mut self) {
        let end = self.end();
        self.run_until(end);
        self.trace
            .rec(end, None, "meta", "end")
            .f("events", self.kernel.fired());
    }

    fn at(&mut self, t: SimTime, target: Target, ev: Ev) {
        let t = t.max(self.now());
        self.kernel
            .schedule(t, target, ev)
            .expect("clamped to the current time");
    }

    fn after(&mut self, delay: f64, node: NodeId, ev: Ev) {
        self.kernel.schedule_in(delay, Target::Node(node), ev);
    }

    fn handle(&mut self, ev: Ev) {
        let now = self.now();
        match ev {
            Ev::TxEnd(plan) => self.on_tx_end(*plan),
            Ev::Cbr { flow, k } => self.on_cbr(flow, k),
            Ev::RouteRetry { node, target } => {
                let mut acts = Vec::new();
                self.nodes[node.index()].router.on_retry(target, now, &mut acts);
                self.route_actions(node, acts);
            }
            Ev::RreqRelay { node, rreq } => self.transmit(node, Dest::Broadcast, Msg::Rreq(rreq)),
            Ev::Beacon { node, tenure } => self.on_beacon_timer(node, tenure),
            Ev::ExpireCheck { node } => {
                let mut acts = Vec::new();
                let n = &mut self.nodes[node.index()];
                n.expire_armed = false;
                n.cluster.expire_stale(now, &mut acts);
                self.cluster_actions(node, acts);
                self.arm_expiry(node);
            }
            Ev::WindowEval { k } => self.on_window_eval(k),
            Ev::ReportRetry { node, id } => self.on_report_retry(node, id),
            Ev::AgentTimeout { node, agent } => self.on_agent_timeout(node, agent),
            Ev::ElectionStart { node, tenure } => self.on_election_start(node, tenure),
            Ev::BallotClose { node, epoch } => self.on_ballot_close(node, epoch),
            Ev::HandoverRetry { node, epoch } => self.on_handover_retry(node, epoch),
            Ev::AttackTick { node, k } => self.on_attack_tick(node, k),
            Ev::AttackPick => self.pick_relay_attackers(),
        }
    }

    // ---- radio plumbing -------------------------------------------------

    fn transmit(&mut self, from: NodeId, dst: Dest, payload: Msg) {
        let now = self.now();
        let frame = Frame {
            src: from,
            dst,
            size: payload.size(),
            payload,
        };
        match self.net.enqueue(from, frame, now) {
            Enqueued::Started(plan) => self.on_air(plan),
            Enqueued::Queued => {}
            Enqueued::Dropped(f) => {
                let mut r = self
                    .trace
                    .rec(now, Some(from), "drop", "queue_full")
                    .f("kind", f.payload.name());
                if let Msg::Data { packet, .. } = &f.payload {
                    r = r.f("origin", packet.origin).f("pid", packet.pid);
                }
                drop(r);
            }
        }
    }

    fn on_air(&mut self, plan: TxPlan<Msg>) {
        let msg = &plan.frame.payload;
        let to = match plan.frame.dst {
            Dest::Broadcast => "bcast".to_string(),
            Dest::Unicast(d) => d.to_string(),
        };
        let mut r = self
            .trace
            .rec(plan.start, Some(plan.node), "tx", msg.name())
            .f("to", to)
            .f("size", plan.frame.size)
            .f("class", msg.class().as_str())
            .f("ctl", msg.control_bytes())
            .f("tag", msg.tag_bytes());
        match msg {
            Msg::Data { packet, .. } => {
                r = r.f("origin", packet.origin).f("pid", packet.pid).f("dst", packet.dst);
            }
            Msg::Cluster(c) => {
                r = r.f("origin", c.origin).f("counter", c.counter);
            }
            _ => {}
        }
        drop(r);
        let end = plan.end;
        self.at(end, Target::Node(plan.node), Ev::TxEnd(Box::new(plan)));
    }

    fn on_tx_end(&mut self, plan: TxPlan<Msg>) {
        let now = self.now();
        let sender = plan.node;
        if let Some(next) = self.net.complete(sender, now) {
            self.on_air(next);
        }
        let TxPlan {
            frame,
            deliveries,
            link_failed,
            ..
        } = plan;
        if let (Dest::Unicast(next), Msg::Data { packet, .. }) = (frame.dst, &frame.payload) {
            if link_failed {
                self.trace
                    .rec(now, Some(sender), "route", "link_fail")
                    .f("to", next)
                    .f("origin", packet.origin)
                    .f("pid", packet.pid);
                let mut acts = Vec::new();
                self.nodes[sender.index()]
                    .router
                    .on_link_failure(next, Some(packet.clone()), now, &mut acts);
                self.route_actions(sender, acts);
            } else if packet.body.is_payload()
                && next != packet.dst
                && deliveries.iter().any(|(n, _)| *n == next)
            {
                let h = Handoff {
                    at: now,
                    next,
                    origin: packet.origin,
                    pid: packet.pid,
                    dst: packet.dst,
                };
                if let Some(a) = self.nodes[sender.index()].detector.on_handoff(h) {
                    self.local_alert(sender, a, None);
                }
            }
        }
        for (rx, kind) in deliveries {
            self.receive(rx, sender, &frame, kind);
        }
    }

    fn receive(&mut self, me: NodeId, from: NodeId, frame: &Frame<Msg>, kind: Reception) {
        let now = self.now();
        let i = me.index();
        let msg = &frame.payload;
        if enforce(&self.nodes[i].blocklist, from, msg.origin(), now) == Enforcement::Drop {
            if let (Msg::Data { packet, .. }, Reception::Received) = (msg, kind) {
                self.trace
                    .rec(now, Some(me), "response", "isolated_drop")
                    .f("from", from)
                    .f("origin", packet.origin)
                    .f("pid", packet.pid);
            }
            return;
        }
        self.nodes[i].cluster.note_neighbor(from, now);
        match msg {
            Msg::Rreq(rreq) => self.on_rreq(me, from, *rreq),
            Msg::Rrep(rrep) => {
                if let Some(a) = self.nodes[i].detector.on_rrep_seen(now, from, rrep) {
                    self.local_alert(me, a, None);
                }
                if kind == Reception::Received {
                    let mut acts = Vec::new();
                    self.nodes[i].router.handle_rrep(from, *rrep, now, &mut acts);
                    self.route_actions(me, acts);
                }
            }
            Msg::Rerr(dsts) => {
                let n = &mut self.nodes[i];
                n.router.on_rerr(from, dsts, now);
                n.detector.watchdog.excuse(from, dsts);
            }
            Msg::Data { packet, tag } => {
                let mut acts = Vec::new();
                self.nodes[i].cluster.on_overhear(from, *tag, now, &mut acts);
                self.cluster_actions(me, acts);
                if let Some(a) = self.nodes[i]
                    .detector
                    .on_forward_overheard(now, from, packet.origin, packet.pid)
                {
                    self.local_alert(me, a, None);
                }
                if frame.dst == Dest::Unicast(packet.dst) && packet.body.is_payload() {
                    if let Some(a) = self.nodes[i].detector.on_data_rx(now, packet.origin, packet.dst) {
                        self.local_alert(me, a, None);
                    }
                }
                if kind == Reception::Received {
                    self.on_packet(me, packet.clone());
                }
            }
            Msg::Cluster(th) => {
                if !self.nodes[i].cluster.first_sighting(th.origin, th.counter) {
                    return;
                }
                self.on_cluster_msg(me, from, th.ttl, th.origin, &th.body);
                if th.ttl > 1 {
                    let relay = TwoHop {
                        ttl: th.ttl - 1,
                        ..th.clone()
                    };
                    self.transmit(me, Dest::Broadcast, Msg::Cluster(relay));
                }
            }
            Msg::Path { route, idx, body } => {
                if kind != Reception::Received || route.get(*idx) != Some(&me) {
                    return;
                }
                if idx + 1 < route.len() {
                    let next = route[idx + 1];
                    let m = Msg::Path {
                        route: route.clone(),
                        idx: idx + 1,
                        body: body.clone(),
                    };
                    self.transmit(me, Dest::Unicast(next), m);
                } else {
                    self.on_path_msg(me, route, body);
                }
            }
        }
    }

    fn active_attack(&self, node: NodeId) -> Option<AttackKind> {
        self.attacks.active(node, self.now()).map(|s| s.kind)
    }

    fn on_rreq(&mut self, me: NodeId, from: NodeId, rreq: RouteRequest) {
        let now = self.now();
        let i = me.index();
        let first = rreq.origin() != me && !self.nodes[i].router.has_seen(rreq.id);
        if first {
            if let Some(a) = self.nodes[i].detector.on_rreq_seen(now, from, &rreq) {
                self.local_alert(me, a, None);
            }
        }
        let mut acts = Vec::new();
        self.nodes[i].router.handle_rreq(from, rreq, now, &mut acts);
        let forging = first && rreq.target != me && matches!(self.active_attack(me), Some(AttackKind::Blackhole));
        if forging {
            acts.retain(|a| !matches!(a, RouteAction::Rebroadcast(_) | RouteAction::SendRrep { .. }));
            let own = self.nodes[i].router.table.known_seq(rreq.target);
            let forged = attacks::forge_rrep(&rreq, own);
            self.trace
                .rec(now, Some(me), "attack", "forged_rrep")
                .f("to", from)
                .f("origin", rreq.origin())
                .f("target", rreq.target)
                .f("seq", forged.target_seq);
            acts.push(RouteAction::SendRrep {
                next_hop: from,
                rrep: forged,
            });
        }
        self.route_actions(me, acts);
    }

    /// A routed packet arrived at `me` as the addressed next hop.
    fn on_packet(&mut self, me: NodeId, packet: Packet<Body>) {
        let now = self.now();
        if packet.dst == me {
            self.deliver(me, packet);
            return;
        }
        if packet.origin != me && packet.body.is_payload() {
            let p = match self.active_attack(me) {
                Some(AttackKind::Blackhole) => Some(1.0),
                Some(AttackKind::PacketDrop { drop_prob }) => Some(drop_prob),
                _ => None,
            };
            if let Some(p) = p {
                let name = format!("attack.drop.{me}");
                if attacks::drops(p, self.rngs.rng(&name)) {
                    self.trace
                        .rec(now, Some(me), "attack", "drop")
                        .f("origin", packet.origin)
                        .f("pid", packet.pid)
                        .f("dst", packet.dst);
                    return;
                }
            }
        }
        let mut acts = Vec::new();
        self.nodes[me.index()].router.forward(packet, now, &mut acts);
        self.route_actions(me, acts);
    }

    fn route_actions(&mut self, me: NodeId, acts: Vec<RouteAction<Body>>) {
        let now = self.now();
        for a in acts {
            match a {
                RouteAction::Originate(rreq) => {
                    self.trace
                        .rec(now, Some(me), "route", "rreq")
                        .f("target", rreq.target)
                        .f("req_id", rreq.id.counter);
                    self.transmit(me, Dest::Broadcast, Msg::Rreq(rreq));
                }
                RouteAction::Rebroadcast(rreq) => {
                    let jitter = self.cfg.routing.rebroadcast_jitter * self.rngs.rng("routing.jitter").random::<f64>();
                    self.after(jitter, me, Ev::RreqRelay { node: me, rreq });
                }
                RouteAction::SendRrep { next_hop, rrep } => {
                    self.transmit(me, Dest::Unicast(next_hop), Msg::Rrep(rrep));
                }
                RouteAction::Transmit { next_hop, packet } => {
                    if self.relay_watch.is_some_and(|t| now >= t) && packet.origin != me && packet.body.is_payload() {
                        self.relay_counts[me.index()] += 1;
                    }
                    let mut cacts = Vec::new();
                    self.nodes[me.index()].cluster.on_traffic(now, &mut cacts);
                    self.cluster_actions(me, cacts);
                    let tag = self.nodes[me.index()].cluster.tag();
                    self.transmit(me, Dest::Unicast(next_hop), Msg::Data { packet, tag });
                }
                RouteAction::Deliver(packet) => self.deliver(me, packet),
                RouteAction::Dropped { packet, reason } => {
                    let why = match reason {
                        crate::routing::DropReason::BufferOverflow => "buffer_full",
                        crate::routing::DropReason::NoRoute => "no_route",
                    };
                    self.trace
                        .rec(now, Some(me), "data", "drop")
                        .f("kind", packet.body.name())
                        .f("origin", packet.origin)
                        .f("pid", packet.pid)
                        .f("reason", why);
                }
                RouteAction::ScheduleRetry { target, at } => {
                    self.at(at, Target::Node(me), Ev::RouteRetry { node: me, target });
                }
                RouteAction::RouteChanged(_) => {}
                RouteAction::RouteError { dst, packet } => {
                    self.trace.rec(now, Some(me), "route", "rerr").f("dst", dst);
                    self.trace
                        .rec(now, Some(me), "data", "drop")
                        .f("kind", packet.body.name())
                        .f("origin", packet.origin)
                        .f("pid", packet.pid)
                        .f("reason", "relay_no_route");
                    self.transmit(me, Dest::Broadcast, Msg::Rerr(vec![dst]));
                }
            }
        }
    }

    /// Sends an IDS message or payload through the routing layer.
    fn send_routed(&mut self, from: NodeId, dst: NodeId, body: Body) {
        let now = self.now();
        self.next_pid += 1;
        let packet = Packet {
            origin: from,
            dst,
            pid: self.next_pid,
            size: body.size(self.cfg.pkt_size, &self.cfg.agents),
            body,
        };
        let mut acts = Vec::new();
        self.nodes[from.index()].router.send(packet, now, &mut acts);
        self.route_actions(from, acts);
    }

    fn send_path(&mut self, route: Vec<NodeId>, body: PathMsg) {
        if route.len() < 2 {
            return;
        }
        let (from, to) = (route[0], route[1]);
        self.transmit(from, Dest::Unicast(to), Msg::Path { route, idx: 1, body });
    }

    fn flood(&mut self, from: NodeId, body: ClusterMsg) {
        let counter = self.nodes[from.index()].cluster.next_counter();
        let ttl = self.cfg.clustering.beacon_ttl;
        let m = Msg::Cluster(TwoHop {
            origin: from,
            counter,
            ttl,
            body,
        });
        self.transmit(from, Dest::Broadcast, m);
    }

    // ---- traffic and attacks ---------------------------------------------

    fn on_cbr(&mut self, flow: usize, k: u64) {
        let now = self.now();
        let f = self.flows[flow];
        self.next_pid += 1;
        let pid = self.next_pid;
        self.trace
            .rec(now, Some(f.src), "data", "orig")
            .f("kind", "cbr")
            .f("flow", flow)
            .f("pid", pid)
            .f("dst", f.dst);
        let mut cacts = Vec::new();
        self.nodes[f.src.index()].cluster.on_traffic(now, &mut cacts);
        self.cluster_actions(f.src, cacts);
        let packet = Packet {
            origin: f.src,
            dst: f.dst,
            pid,
            size: f.size,
            body: Body::Cbr { flow },
        };
        let mut acts = Vec::new();
        self.nodes[f.src.index()].router.send(packet, now, &mut acts);
        self.route_actions(f.src, acts);
        let next = f.start + (k + 1) as f64 / f.rate;
        if next < f.stop {
            self.at(next, Target::Global, Ev::Cbr { flow, k: k + 1 });
        }
    }

    fn on_attack_tick(&mut self, node: NodeId, k: u64) {
        let now = self.now();
        let Some(s) = self.attacks.active(node, now).copied() else {
            return;
        };
        match s.kind {
            AttackKind::Flooding { .. } => {
                let n = self.nodes.len() as u32;
                let rng = self.rngs.rng("attack.flood");
                let mut dst = rng.random_range(0..n - 1);
                if dst >= node.0 {
                    dst += 1;
                }
                let rreq = self.nodes[node.index()].router.next_rreq(NodeId(dst));
                self.trace
                    .rec(now, Some(node), "attack", "rreq")
                    .f("target", dst)
                    .f("req_id", rreq.id.counter);
                self.transmit(node, Dest::Broadcast, Msg::Rreq(rreq));
            }
            AttackKind::SleepDeprivation { victim, .. } => {
                self.next_pid += 1;
                let pid = self.next_pid;
                self.trace
                    .rec(now, Some(node), "attack", "bogus")
                    .f("pid", pid)
                    .f("victim", victim);
                let mut cacts = Vec::new();
                self.nodes[node.index()].cluster.on_traffic(now, &mut cacts);
                self.cluster_actions(node, cacts);
                let packet = Packet {
                    origin: node,
                    dst: victim,
                    pid,
                    size: self.cfg.pkt_size,
                    body: Body::Bogus,
                };
                let mut acts = Vec::new();
                self.nodes[node.index()].router.send(packet, now, &mut acts);
                self.route_actions(node, acts);
            }
            _ => return,
        }
        if let Some(t) = s.emission(k + 1) {
            self.at(t, Target::Node(node), Ev::AttackTick { node, k: k + 1 });
        }
    }

    fn deliver(&mut self, me: NodeId, packet: Packet<Body>) {
        let now = self.now();
        match packet.body {
            Body::Cbr { flow } => {
                self.trace
                    .rec(now, Some(me), "data", "deliver")
                    .f("kind", "cbr")
                    .f("flow", flow)
                    .f("origin", packet.origin)
                    .f("pid", packet.pid);
            }
            Body::Bogus => {
                self.trace
                    .rec(now, Some(me), "data", "deliver")
                    .f("kind", "bogus")
                    .f("origin", packet.origin)
                    .f("pid", packet.pid);
            }
            Body::Agent(agent) => self.on_agent(me, *agent),
            Body::Report(r) => {
                let from = packet.origin;
                self.head_on_report(me, from, r.alert.clone());
                self.send_routed(me, from, Body::ReportAck { id: r.id });
            }
            Body::ReportAck { id } => {
                self.nodes[me.index()].reports.remove(&id);
            }
            Body::CoopRequest(s) => self.head_on_coop(me, packet.origin, *s),
            Body::Ballot(b) => {
                let n = &mut self.nodes[me.index()];
                if n.cluster.is_head() && b.epoch == n.epoch {
                    n.ballots.push(b);
                }
            }
            Body::Handover(h) => self.on_handover(me, *h),
            Body::HandoverAck { epoch } => self.on_handover_ack(me, packet.origin, epoch),
            Body::NetIsolate { action, round } => self.on_net_isolate(me, packet.origin, action, round),
        }
    }

    // ---- clustering -------------------------------------------------------

    fn cluster_actions(&mut self, me: NodeId, acts: Vec<ClusterAction>) {
        if acts.is_empty() {
            return;
        }
        let now = self.now();
        for a in acts {
            match a {
                ClusterAction::Declared => {
                    let n = &mut self.nodes[me.index()];
                    n.tenure += 1;
                    let tenure = n.tenure;
                    self.trace
                        .rec(now, Some(me), "cluster", "declare")
                        .f("tenure", tenure);
                    self.start_tenure(me, tenure);
                }
                ClusterAction::Joined { head, hops, path } => {
                    self.trace
                        .rec(now, Some(me), "cluster", "join")
                        .f("head", head)
                        .f("hops", hops);
                    let mut route = vec![me];
                    route.extend(path);
                    self.send_path(route, PathMsg::Register { hops });
                }
                ClusterAction::SendAdvert { path, advert } => {
                    let mut route = vec![me];
                    route.extend(path);
                    self.send_path(route, PathMsg::Advert(advert));
                }
                ClusterAction::RoleChanged { from, to } => {
                    self.trace
                        .rec(now, Some(me), "cluster", "role")
                        .f("from", from)
                        .f("to", to);
                }
                ClusterAction::Expired { head } => {
                    let last = self.nodes[me.index()].cluster.head_last_heard();
                    self.trace
                        .rec(now, Some(me), "cluster", "expire")
                        .f("head", head)
                        .f("last_heard", last.secs());
                }
            }
        }
        self.arm_expiry(me);
    }

    fn arm_expiry(&mut self, me: NodeId) {
        let n = &mut self.nodes[me.index()];
        if n.expire_armed {
            return;
        }
        if let Some(d) = n.cluster.expiry_deadline() {
            n.expire_armed = true;
            self.at(d, Target::Node(me), Ev::ExpireCheck { node: me });
        }
    }

    fn start_tenure(&mut self, me: NodeId, tenure: u64) {
        let now = self.now();
        self.at(now, Target::Node(me), Ev::Beacon { node: me, tenure });
        let period = self.election_period;
        self.after(period, me, Ev::ElectionStart { node: me, tenure });
    }

    fn on_beacon_timer(&mut self, me: NodeId, tenure: u64) {
        let now = self.now();
        let n = &mut self.nodes[me.index()];
        if !n.cluster.is_head() || n.tenure != tenure {
            return;
        }
        let Ok(mut b) = n.cluster.emit_beacon(now) else {
            return;
        };
        b.isolated = n.policy.isolated();
        let counter_next = n.cluster.config().beacon_period;
        self.trace
            .rec(now, Some(me), "cluster", "beacon")
            .f("tenure", tenure)
            .f("members", List(&b.member_ids))
            .f("gateways", List(&b.gateway_ids))
            .f("dgateways", List(&b.distributed_gateway_ids));
        self.flood(me, ClusterMsg::Beacon(b));
        self.after(counter_next, me, Ev::Beacon { node: me, tenure });
    }

    fn on_cluster_msg(&mut self, me: NodeId, from: NodeId, ttl: u8, origin: NodeId, body: &ClusterMsg) {
        let now = self.now();
        let i = me.index();
        match body {
            ClusterMsg::Beacon(b) => {
                let mut acts = Vec::new();
                self.nodes[i].cluster.on_beacon(from, ttl, b, now, &mut acts);
                self.cluster_actions(me, acts);
                let n = &mut self.nodes[i];
                if n.cluster.head_id() == Some(b.head_id) && !n.cluster.is_head() {
                    for m in &b.member_ids {
                        n.trust.ensure(*m, now);
                    }
                    n.trust.ensure(b.head_id, now);
                    for s in b.isolated.clone() {
                        self.apply_block(me, s, ResponseKind::ClusterIsolate, b.head_id, 0);
                    }
                }
            }
            ClusterMsg::ElectionCall { epoch, candidates } => {
                let n = &mut self.nodes[i];
                if n.cluster.head_id() != Some(origin) || n.cluster.is_head() {
                    return;
                }
                let cands: Vec<NodeId> = candidates
                    .iter()
                    .copied()
                    .filter(|c| !n.blocklist.is_blocked(*c, now))
                    .collect();
                if let Some(b) = crate::trust::cast_vote(me, &mut n.trust, &cands, *epoch, now) {
                    self.trace
                        .rec(now, Some(me), "election", "ballot")
                        .f("epoch", epoch)
                        .f("head", origin)
                        .f("candidate", b.candidate);
                    self.send_routed(me, origin, Body::Ballot(b));
                } else {
                    self.trace
                        .rec(now, Some(me), "election", "abstain")
                        .f("epoch", epoch)
                        .f("head", origin);
                }
            }
            ClusterMsg::HeadChange { old, new } => {
                let (old, new) = (*old, *new);
                if me == new {
                    return;
                }
                let n = &self.nodes[i];
                if me == old && n.cluster.is_head() {
                    self.step_down(me, new);
                } else if n.cluster.head_id() == Some(old) {
                    let mut acts = Vec::new();
                    self.nodes[i].cluster.follow(new, now, &mut acts);
                    self.trace
                        .rec(now, Some(me), "cluster", "follow")
                        .f("old", old)
                        .f("head", new);
                    self.cluster_actions(me, acts);
                }
            }
            ClusterMsg::Isolate(action) => {
                self.apply_block(me, action.subject, action.kind, action.issuer, action.epoch);
            }
            ClusterMsg::BaseDelta { sigs, version } => {
                let n = &mut self.nodes[i];
                if n.cluster.head_id() == Some(origin) && !n.cluster.is_head() {
                    let added = n.detector.base.merge(sigs, *version);
                    let v = n.detector.base.version;
                    self.trace
                        .rec(now, Some(me), "detect", "merge")
                        .f("head", origin)
                        .f("added", added)
                        .f("version", v);
                }
            }
        }
    }

    fn on_path_msg(&mut self, me: NodeId, route: &[NodeId], body: &PathMsg) {
        let now = self.now();
        let i = me.index();
        let sender = route[0];
        match body {
            PathMsg::Advert(a) => {
                if !self.nodes[i].cluster.is_head() {
                    return;
                }
                let newly = self.nodes[i].cluster.on_advert(a.clone(), now);
                if newly {
                    self.registered(me, sender, route);
                }
            }
            PathMsg::Register { .. } => {
                if !self.nodes[i].cluster.is_head() {
                    return;
                }
                if self.nodes[i].cluster.register_member(sender, now).is_ok() {
                    self.registered(me, sender, route);
                }
            }
            PathMsg::RegisterAck { sigs, version } => {
                let n = &mut self.nodes[i];
                if n.cluster.head_id() == Some(sender) && !n.cluster.is_head() {
                    n.detector.base.merge(sigs, *version);
                }
            }
        }
    }

    fn registered(&mut self, head: NodeId, member: NodeId, route: &[NodeId]) {
        let now = self.now();
        let dist = self.net.hop_distance(member, head, now);
        let n = &mut self.nodes[head.index()];
        n.trust.ensure(member, now);
        let sigs = n.detector.base.learned_signatures();
        let version = n.detector.base.version;
        let mut r = self
            .trace
            .rec(now, Some(head), "cluster", "register")
            .f("member", member)
            .f("path", route.len() - 1);
        r = match dist {
            Some(d) => r.f("dist", d),
            None => r.f("dist", "inf"),
        };
        drop(r);
        let back: Vec<NodeId> = route.iter().rev().copied().collect();
        self.send_path(back, PathMsg::RegisterAck { sigs, version });
    }

    // ---- windows ----------------------------------------------------------

    fn on_window_eval(&mut self, k: u64) {
        let now = self.now();
        let w = self.cfg.detection.window;
        for i in 0..self.nodes.len() {
            let me = NodeId(i as u32);
            let (_, alerts) = self.nodes[i].detector.sweep_watchdog(now);
            for a in alerts {
                self.local_alert(me, a, None);
            }
            let (samples, findings) = self.nodes[i].detector.evaluate_window(k);
            for s in &samples {
                self.trace
                    .rec(now, Some(me), "detect", "sample")
                    .f("suspect", s.suspect)
                    .f("metric", s.metric.as_str())
                    .f("window_start", s.window_start.secs())
                    .f("value", s.value)
                    .f("count", s.count);
            }
            for f in findings {
                match f {
                    Finding::Alert(a) => self.local_alert(me, a, Some(k)),
                    Finding::Suspicion(s) => self.on_suspicion(me, s),
                }
            }
        }
        let next = SimTime::from_secs((k + 2) as f64 * w + self.cfg.detection.watchdog_deadline);
        if next <= self.end() {
            self.at(next, Target::Global, Ev::WindowEval { k: k + 1 });
        }
    }

    fn window_index(&self, t: SimTime) -> u64 {
        (t.secs() / self.cfg.detection.window).floor() as u64
    }

    fn trace_alert(&mut self, a: &Alert, window: u64) {
        self.trace
            .rec(self.now(), Some(a.reporter), "alert", a.detector.as_str())
            .f("suspect", a.suspect)
            .f("label", a.label)
            .f("confidence", a.confidence)
            .f("source", &a.source)
            .f("window", window);
    }

    /// A node's own detector raised an alert: log it, block the suspect
    /// locally and tell the head.
    fn local_alert(&mut self, me: NodeId, a: Alert, window: Option<u64>) {
        if a.suspect == me {
            return;
        }
        let now = self.now();
        let window = window.unwrap_or_else(|| self.window_index(now));
        self.trace_alert(&a, window);
        let sev = match a.detector {
            DetectorKind::LocalMisuse => self.cfg.detection.severity_misuse,
            _ => self.cfg.detection.severity_anomaly,
        };
        let n = &mut self.nodes[me.index()];
        if let Ok(v) = n.trust.penalize(a.suspect, sev, now) {
            self.trace
                .rec(now, Some(me), "trust", "penalize")
                .f("subject", a.suspect)
                .f("value", v);
        }
        self.apply_block(me, a.suspect, ResponseKind::BlockLocal, me, 0);
        self.report(me, a);
    }
}

//! Scenario builders and trace checks shared by the integration tests and
//! the acceptance runner.
#![allow(dead_code)]

pub mod props;

use std::collections::{BTreeMap, BTreeSet};

use manet_ids::clustering::ClusterRole;
use manet_ids::harness::trace::{self, TraceRecord};
use manet_ids::harness::ScenarioConfig;
use manet_ids::kernel::SimTime;
use manet_ids::world::Simulation;
use manet_ids::NodeId;

/// A lossless static scenario with fixed positions and explicit flows.
/// Elections are pushed past the end of the run.
pub fn static_scenario(positions: &[[f64; 2]], flows: &[&str], end: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    let w = positions.iter().map(|p| p[0]).fold(0.0, f64::max) + 100.0;
    let h = positions.iter().map(|p| p[1]).fold(0.0, f64::max) + 100.0;
    c.area_width = w.max(100.0);
    c.area_height = h.max(100.0);
    c.node_count = positions.len();
    c.positions = positions.to_vec();
    c.mobility_model = "static".into();
    c.radio.loss_prob = 0.0;
    c.flows = flows.iter().map(|s| s.to_string()).collect();
    c.warmup = end / 2.0;
    c.test = end - c.warmup;
    c.election.base_period = 1.0e6;
    c
}

pub fn run_static(cfg: &ScenarioConfig, seed: u64) -> Simulation {
    let mut sim = Simulation::new(cfg, seed).expect("valid scenario");
    sim.run();
    sim
}

pub fn roles(sim: &Simulation) -> Vec<ClusterRole> {
    sim.nodes().iter().map(|n| n.cluster.role()).collect()
}

pub fn records(sim: &Simulation) -> Vec<TraceRecord> {
    trace::parse(sim.trace().as_str()).expect("trace parses")
}

// ---- clustering oracle -----------------------------------------------------

pub struct Topology {
    pub name: &'static str,
    pub positions: Vec<[f64; 2]>,
    pub flows: Vec<&'static str>,
    pub expected: Vec<ClusterRole>,
}

/// Hand-built static topologies with their expected steady-state roles.
/// Range is 250 m; neighbours sit 200 m apart, non-neighbours more than 250 m.
pub fn oracle_topologies() -> Vec<Topology> {
    use ClusterRole::*;
    vec![
        // A lone head: its partner is out of range and hears nothing.
        Topology {
            name: "singleton",
            positions: vec![[50.0, 50.0], [650.0, 50.0]],
            flows: vec!["0>1@1"],
            expected: vec![Head, Unclustered],
        },
        Topology {
            name: "pair",
            positions: vec![[50.0, 50.0], [250.0, 50.0]],
            flows: vec!["0>1@1"],
            expected: vec![Head, Member],
        },
        Topology {
            name: "three_line",
            positions: vec![[50.0, 50.0], [250.0, 50.0], [450.0, 50.0]],
            flows: vec!["0>2@1"],
            expected: vec![Head, Member, Member],
        },
        // Two heads with two candidate bridges: only the lower id bridges.
        Topology {
            name: "diamond",
            positions: vec![[50.0, 200.0], [200.0, 350.0], [200.0, 50.0], [350.0, 200.0]],
            flows: vec!["0>1@1", "3>2@1"],
            expected: vec![Head, Gateway, Member, Head],
        },
        // Two heads that declare at the same instant share a single bridge.
        Topology {
            name: "two_cluster_bridge",
            positions: vec![[50.0, 50.0], [250.0, 50.0], [450.0, 50.0], [50.0, 250.0], [450.0, 250.0]],
            flows: vec!["0>3@1", "2>4@1"],
            expected: vec![Head, Gateway, Head, Member, Member],
        },
        // Heads three hops apart: no common neighbour, so the two middle
        // nodes bridge them together.
        Topology {
            name: "distributed_gateway_line",
            positions: vec![[50.0, 50.0], [250.0, 50.0], [450.0, 50.0], [650.0, 50.0]],
            flows: vec!["0>1@1", "3>2@1"],
            expected: vec![Head, DistributedGateway, DistributedGateway, Head],
        },
    ]
}

pub struct OracleOutcome {
    pub name: &'static str,
    pub expected: Vec<ClusterRole>,
    pub got: Vec<ClusterRole>,
    /// Gateways each head lists, keyed by head.
    pub gateways: BTreeMap<NodeId, Vec<NodeId>>,
    pub dgateways: BTreeMap<NodeId, Vec<NodeId>>,
}

impl OracleOutcome {
    pub fn ok(&self) -> bool {
        self.expected == self.got
    }
}

pub fn run_oracle(t: &Topology) -> OracleOutcome {
    let cfg = static_scenario(&t.positions, &t.flows, 60.0);
    let sim = run_static(&cfg, 1);
    let mut gateways = BTreeMap::new();
    let mut dgateways = BTreeMap::new();
    for r in records(&sim).iter().filter(|r| r.is("cluster", "beacon")) {
        let head = r.node.expect("beacon has a node");
        gateways.insert(head, r.nodes("gateways"));
        dgateways.insert(head, r.nodes("dgateways"));
    }
    OracleOutcome {
        name: t.name,
        expected: t.expected.clone(),
        got: roles(&sim),
        gateways,
        dgateways,
    }
}

// ---- passive clustering invariants ----------------------------------------

/// A 30-node mobile scenario, shortened for the property suite.
pub fn mobile_scenario() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.warmup = 60.0;
    c.test = 60.0;
    c
}

#[derive(Debug, Default)]
pub struct ClusteringViolations {
    pub far_registrations: Vec<String>,
    pub head_conflicts: Vec<String>,
    pub cadence: Vec<String>,
    pub expiry: Vec<String>,
    pub registrations: usize,
    pub beacon_gaps: usize,
    pub expiries: usize,
}

impl ClusteringViolations {
    pub fn is_clean(&self) -> bool {
        self.far_registrations.is_empty()
            && self.head_conflicts.is_empty()
            && self.cadence.is_empty()
            && self.expiry.is_empty()
    }
}

/// Runs one mobile seed, sampling head bindings every 5 s, and checks the
/// clustering invariants against the trace.
pub fn check_clustering(cfg: &ScenarioConfig, seed: u64, v: &mut ClusteringViolations) {
    let mut sim = Simulation::new(cfg, seed).expect("valid scenario");
    let end = sim.end().secs();
    let mut t = 5.0;
    while t <= end {
        sim.run_until(SimTime::from_secs(t));
        for n in sim.nodes() {
            let c = &n.cluster;
            let fine = match c.role() {
                ClusterRole::Head => c.head_id() == Some(n.id),
                ClusterRole::Unclustered => c.head_id().is_none(),
                _ => c.head_id().is_some_and(|h| h != n.id),
            };
            if !fine {
                v.head_conflicts
                    .push(format!("seed {seed} t {t} node {} role {:?} head {:?}", n.id, c.role(), c.head_id()));
            }
        }
        t += 5.0;
    }
    sim.run();
    let period = cfg.clustering.beacon_period;
    let timeout = cfg.clustering.timeout;
    let mut last_beacon: BTreeMap<(NodeId, u64), f64> = BTreeMap::new();
    for r in records(&sim) {
        if r.is("cluster", "register") {
            v.registrations += 1;
            match r.u64("dist") {
                Some(d) if d <= 2 => {}
                _ => v.far_registrations.push(format!(
                    "seed {seed} t {} head {:?} member {:?} dist {:?}",
                    r.time,
                    r.node,
                    r.get("member"),
                    r.get("dist")
                )),
            }
        } else if r.is("cluster", "beacon") {
            let key = (r.node.expect("node"), r.u64("tenure").expect("tenure"));
            if let Some(prev) = last_beacon.insert(key, r.time) {
                v.beacon_gaps += 1;
                if r.time != prev + period {
                    v.cadence
                        .push(format!("seed {seed} node {} gap {} -> {}", key.0, prev, r.time));
                }
            }
        } else if r.is("cluster", "expire") {
            v.expiries += 1;
            let last = r.f64("last_heard").expect("last_heard");
            if r.time != last + timeout {
                v.expiry
                    .push(format!("seed {seed} node {:?} at {} heard {}", r.node, r.time, last));
            }
        }
    }
}

/// Five distinct shortened scenarios.
pub fn determinism_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for kind in ["none", "flooding", "blackhole", "sleep_deprivation"] {
        let mut c = ScenarioConfig::default();
        c.attack_kind = kind.into();
        c.warmup = 100.0;
        c.test = 50.0;
        out.push(c);
    }
    let mut g = grayhole();
    g.warmup = 100.0;
    g.test = 50.0;
    out.push(g);
    out
}

// ---- agents ------------------------------------------------------------------

/// Several half-dropping relays: soft forward-ratio suspicions that heads
/// settle with agents.
pub fn grayhole() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.attack_kind = "packet_drop".into();
    c.drop_prob = 0.5;
    c.attack_count = 3;
    c.attack_placement = "relay".into();
    c
}

#[derive(Debug, Default)]
pub struct AgentAudit {
    pub dispatches: usize,
    pub lost: usize,
    pub returned_and_lost: Vec<String>,
    pub over_dispatched: Vec<String>,
    pub missing_redispatch: Vec<String>,
}

impl AgentAudit {
    pub fn is_clean(&self) -> bool {
        self.returned_and_lost.is_empty() && self.over_dispatched.is_empty() && self.missing_redispatch.is_empty()
    }
}

/// Agent lifecycle checks over one trace. Agents and requests are numbered
/// per head, so both are keyed by the dispatching head.
pub fn audit_agents(label: &str, text: &str, max_retries: u64, audit: &mut AgentAudit) {
    let recs = trace::parse(text).expect("trace parses");
    // (head, agent) -> (request, retry)
    let mut agent_of: BTreeMap<(NodeId, u64), (u64, u64)> = BTreeMap::new();
    let mut per_request: BTreeMap<(NodeId, u64), Vec<u64>> = BTreeMap::new();
    let mut returned = BTreeSet::new();
    let mut lost = Vec::new();
    for (i, r) in recs.iter().enumerate() {
        let Some(head) = r.node else { continue };
        if r.is("agent", "dispatch") {
            audit.dispatches += 1;
            let agent = r.u64("agent").expect("agent");
            let request = r.u64("request").expect("request");
            let retry = r.u64("retry").expect("retry");
            agent_of.insert((head, agent), (request, retry));
            per_request.entry((head, request)).or_default().push(retry);
        } else if r.is("agent", "returned") {
            returned.insert((head, r.u64("agent").expect("agent")));
        } else if r.is("agent", "lost") {
            lost.push((i, head, r.u64("agent").expect("agent")));
        }
    }
    audit.lost += lost.len();
    for (_, head, agent) in &lost {
        if returned.contains(&(*head, *agent)) {
            audit
                .returned_and_lost
                .push(format!("{label}: head {head} agent {agent}"));
        }
    }
    for ((head, request), retries) in &per_request {
        if retries.len() as u64 > max_retries + 1 {
            audit
                .over_dispatched
                .push(format!("{label}: head {head} request {request} dispatched {}", retries.len()));
        }
    }
    for (i, head, agent) in lost {
        let (request, retry) = agent_of[&(head, agent)];
        if retry >= max_retries {
            continue;
        }
        let following = recs[i + 1..]
            .iter()
            .filter(|r| {
                r.node == Some(head)
                    && r.is("agent", "dispatch")
                    && r.u64("request") == Some(request)
                    && r.u64("retry") == Some(retry + 1)
            })
            .count();
        if following != 1 {
            audit.missing_redispatch.push(format!(
                "{label}: head {head} request {request} retry {retry} followed by {following} dispatches"
            ));
        }
    }
}

// ---- watchdog exactness ------------------------------------------------------

/// Chain 0 - 1 - 2 - 3 with node 2 dropping half of the data it should relay.
pub fn dropper_chain() -> ScenarioConfig {
    let mut c = static_scenario(
        &[[50.0, 50.0], [250.0, 50.0], [450.0, 50.0], [650.0, 50.0]],
        &["0>3@1"],
        120.0,
    );
    c.attack_kind = "packet_drop".into();
    c.attack_nodes = vec![2];
    c.drop_prob = 0.5;
    c.attack_start = Some(0.0);
    c
}

pub struct WatchdogComparison {
    /// (window_start, watchdog value, ground truth)
    pub windows: Vec<(f64, f64, f64)>,
}

impl WatchdogComparison {
    pub fn exact(&self) -> bool {
        !self.windows.is_empty() && self.windows.iter().all(|(_, a, b)| a == b)
    }
}

/// Compares node 1's forward-ratio samples for node 2 with the ratio derived
/// from what node 1 handed over and what node 2 actually relayed.
pub fn watchdog_vs_truth(cfg: &ScenarioConfig, seed: u64) -> WatchdogComparison {
    let sim = run_static(cfg, seed);
    let recs = records(&sim);
    let (observer, relay) = (NodeId(1), NodeId(2));
    let window = cfg.detection.window;
    let bps = cfg.radio.channel_bps;
    let relayed: BTreeSet<(u64, u64)> = recs
        .iter()
        .filter(|r| r.node == Some(relay) && r.cat == "tx" && r.get("pid").is_some())
        .filter_map(|r| Some((r.u64("origin")?, r.u64("pid")?)))
        .collect();
    // window index -> (handed, relayed)
    let mut truth: BTreeMap<i64, (u32, u32)> = BTreeMap::new();
    for r in recs.iter().filter(|r| {
        r.node == Some(observer)
            && r.cat == "tx"
            && r.get("pid").is_some()
            && r.node_field("to") == Some(relay)
            && r.node_field("dst") != Some(relay)
    }) {
        let size = r.u64("size").expect("size") as u32;
        let handed = SimTime::from_secs(r.time) + manet_ids::net::airtime(size, bps);
        let k = (handed.secs() / window).floor() as i64;
        let key = (r.u64("origin").expect("origin"), r.u64("pid").expect("pid"));
        let e = truth.entry(k).or_default();
        e.0 += 1;
        if relayed.contains(&key) {
            e.1 += 1;
        }
    }
    let windows = recs
        .iter()
        .filter(|r| {
            r.node == Some(observer)
                && r.is("detect", "sample")
                && r.node_field("suspect") == Some(relay)
                && r.get("metric") == Some("forward_ratio")
        })
        .map(|r| {
            let ws = r.f64("window_start").expect("window_start");
            let k = (ws / window).round() as i64;
            let (handed, fwd) = truth.get(&k).copied().unwrap_or((0, 0));
            let expect = if handed == 0 { f64::NAN } else { fwd as f64 / handed as f64 };
            (ws, r.f64("value").expect("value"), expect)
        })
        .collect();
    WatchdogComparison { windows }
}

// ---- response propagation ------------------------------------------------------

/// Three clusters in a line (heads 0, 2, 4; gateways 1, 3) and a member 5 of
/// the far cluster.
pub fn three_cluster_line() -> ScenarioConfig {
    static_scenario(
        &[
            [50.0, 50.0],
            [250.0, 50.0],
            [450.0, 50.0],
            [650.0, 50.0],
            [850.0, 50.0],
            [850.0, 250.0],
        ],
        &["0>1@1", "2>1@1", "4>5@1"],
        120.0,
    )
}

pub struct Propagation {
    pub roles: Vec<ClusterRole>,
    pub middle_neighbor_heads: Vec<NodeId>,
    pub missing: Vec<NodeId>,
    pub max_round: u64,
    pub blocks_after_first: usize,
    pub blocks_after_duplicate: usize,
}

/// Issues a network isolation of node 5 from head 0 at 60 s, then the same
/// isolation again from head 4 at 90 s.
pub fn propagate_isolation() -> Propagation {
    let cfg = three_cluster_line();
    let mut sim = Simulation::new(&cfg, 1).expect("valid scenario");
    let subject = NodeId(5);
    sim.run_until(SimTime::from_secs(60.0));
    let roles = roles(&sim);
    let middle_neighbor_heads = sim.node(NodeId(2)).cluster.neighbor_heads().into_iter().collect();
    sim.issue_network_isolate(NodeId(0), subject);
    sim.run_until(SimTime::from_secs(90.0));
    let count = |sim: &Simulation| {
        records(sim)
            .iter()
            .filter(|r| r.is("response", "block") && r.node_field("subject") == Some(subject))
            .count()
    };
    let blocks_after_first = count(&sim);
    let now = sim.now();
    let missing = sim
        .nodes()
        .iter()
        .filter(|n| n.id != subject && !n.blocklist.is_blocked(subject, now))
        .map(|n| n.id)
        .collect();
    sim.issue_network_isolate(NodeId(4), subject);
    sim.run();
    let blocks_after_duplicate = count(&sim);
    let max_round = records(&sim)
        .iter()
        .filter(|r| r.is("response", "net_rx"))
        .filter_map(|r| r.u64("round"))
        .max()
        .unwrap_or(0);
    Propagation {
        roles,
        middle_neighbor_heads,
        missing,
        max_round,
        blocks_after_first,
        blocks_after_duplicate,
    }
}

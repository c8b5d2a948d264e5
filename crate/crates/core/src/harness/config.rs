//! Scenario configuration.
//!
//! A scenario file is TOML with dotted keys (`traffic.flow_count = 15`).
//! Every key is optional and unknown keys are rejected. [`KEYS`] is the
//! authoritative list, used for parsing, for the snapshot written next to
//! results and for the command-line help.

use std::fmt::Write as _;
use std::path::Path;

use crate::agents::AgentConfig;
use crate::attacks::{AttackKind, AttackSchedule};
use crate::clustering::ClusteringConfig;
use crate::detection::{AnomalyRule, DetectionConfig, MisuseSignature};
use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::net::{Area, MobilityModel, Position, RadioConfig};
use crate::response::ResponseConfig;
use crate::routing::RoutingConfig;
use crate::trust::TrustParams;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct ElectionConfig {
    /// Election period at zero mean speed, seconds.
    pub base_period: f64,
    pub ballot_window: f64,
    pub handover_retry: f64,
}

impl Default for ElectionConfig {
    fn default() -> Self {
        ElectionConfig {
            base_period: 100.0,
            ballot_window: 2.0,
            handover_retry: 2.0,
        }
    }
}

/// Threshold knobs; turned into signatures and rules by
/// [`ScenarioConfig::detection_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionKnobs {
    pub window: f64,
    pub min_samples: u32,
    pub retention: f64,
    pub watchdog_deadline: f64,
    pub fwd_lower_hard: f64,
    pub fwd_lower_soft: f64,
    pub rreq_upper_soft: f64,
    pub rreq_upper_hard: f64,
    pub drx_upper_soft: f64,
    pub drx_upper_hard: f64,
    pub bh_min_seq_gap: u32,
    pub fl_more_than: usize,
    pub sd_more_than: usize,
    pub anomaly_confidence: f64,
    pub coop_confidence: f64,
    pub coop_quorum: usize,
    pub severity_misuse: f64,
    pub severity_anomaly: f64,
    pub severity_coop: f64,
    pub report_retry: f64,
    pub learned_threshold: usize,
}

impl Default for DetectionKnobs {
    fn default() -> Self {
        let d = DetectionConfig::default();
        DetectionKnobs {
            window: d.window,
            min_samples: 5,
            retention: d.retention,
            watchdog_deadline: d.watchdog_deadline,
            fwd_lower_hard: 0.25,
            fwd_lower_soft: 0.5,
            rreq_upper_soft: 5.0,
            rreq_upper_hard: 10.0,
            drx_upper_soft: 10.0,
            drx_upper_hard: 20.0,
            bh_min_seq_gap: 1000,
            fl_more_than: 50,
            sd_more_than: 200,
            anomaly_confidence: d.anomaly_confidence,
            coop_confidence: d.coop_confidence,
            coop_quorum: d.coop_quorum,
            severity_misuse: d.severity_misuse,
            severity_anomaly: d.severity_anomaly,
            severity_coop: d.severity_coop,
            report_retry: d.report_retry,
            learned_threshold: d.learned_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub area_width: f64,
    pub area_height: f64,
    pub node_count: usize,
    /// Fixed initial positions; empty means uniform random.
    pub positions: Vec<[f64; 2]>,
    pub radio: RadioConfig,
    pub mobility_model: String,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause: f64,
    pub flow_count: usize,
    pub traffic_rate: f64,
    pub pkt_size: u32,
    pub flow_start_jitter: f64,
    /// Explicit flows `"src>dst@start"`; replaces random flows when set.
    pub flows: Vec<String>,
    pub warmup: f64,
    pub test: f64,
    pub attack_kind: String,
    pub attack_count: usize,
    pub attack_nodes: Vec<u32>,
    /// `random` or `relay` (busiest transit forwarder before the start).
    pub attack_placement: String,
    pub attack_start: Option<f64>,
    pub attack_stop: Option<f64>,
    pub flood_rate: f64,
    pub sd_rate: f64,
    pub sd_victim: Option<u32>,
    pub drop_prob: f64,
    pub routing: RoutingConfig,
    pub clustering: ClusteringConfig,
    pub trust: TrustParams,
    pub election: ElectionConfig,
    pub agents: AgentConfig,
    pub detection: DetectionKnobs,
    pub response: ResponseConfig,
    pub grace: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            area_width: 500.0,
            area_height: 500.0,
            node_count: 30,
            positions: Vec::new(),
            radio: RadioConfig::default(),
            mobility_model: "random_waypoint".into(),
            speed_min: 1.0,
            speed_max: 5.0,
            pause: 5.0,
            flow_count: 15,
            traffic_rate: 2.0,
            pkt_size: 512,
            flow_start_jitter: 10.0,
            flows: Vec::new(),
            warmup: 200.0,
            test: 100.0,
            attack_kind: "none".into(),
            attack_count: 1,
            attack_nodes: Vec::new(),
            attack_placement: "random".into(),
            attack_start: None,
            attack_stop: None,
            flood_rate: 50.0,
            sd_rate: 30.0,
            sd_victim: None,
            drop_prob: 1.0,
            routing: RoutingConfig::default(),
            clustering: ClusteringConfig::default(),
            trust: TrustParams::default(),
            election: ElectionConfig::default(),
            agents: AgentConfig::default(),
            detection: DetectionKnobs::default(),
            response: ResponseConfig::default(),
            grace: 30.0,
        }
    }
}

enum Slot<'a> {
    F64(&'a mut f64),
    OptF64(&'a mut Option<f64>),
    U64(&'a mut u64),
    U32(&'a mut u32),
    U8(&'a mut u8),
    Usize(&'a mut usize),
    OptU32(&'a mut Option<u32>),
    Bool(&'a mut bool),
    Str(&'a mut String),
    StrList(&'a mut Vec<String>),
    U32List(&'a mut Vec<u32>),
    Points(&'a mut Vec<[f64; 2]>),
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed used when no seed is given on the command line"),
    ("area.width", "simulation area width, m"),
    ("area.height", "simulation area height, m"),
    ("nodes.count", "number of nodes"),
    ("nodes.positions", "fixed initial positions [[x, y], ...]; empty = uniform random"),
    ("radio.range", "unit-disk transmission range, m"),
    ("radio.channel_bps", "channel rate, bit/s"),
    ("radio.loss_prob", "independent per-receiver frame loss probability"),
    ("radio.queue_capacity", "per-node transmit queue length, frames"),
    ("mobility.model", "\"random_waypoint\" or \"static\""),
    ("mobility.speed_min", "minimum waypoint speed, m/s"),
    ("mobility.speed_max", "maximum waypoint speed, m/s"),
    ("mobility.pause", "pause at each waypoint, s"),
    ("traffic.flow_count", "number of random CBR flows"),
    ("traffic.rate", "packets per second per flow"),
    ("traffic.pkt_size", "CBR payload size, bytes"),
    ("traffic.buffer", "route-discovery send buffer, packets"),
    ("traffic.start_jitter", "random flows start uniformly in [0, start_jitter), s"),
    ("traffic.flows", "explicit flows [\"src>dst@start\", ...]; replaces random flows"),
    ("duration.warmup", "benign warm-up period, s"),
    ("duration.test", "scored test period, s"),
    ("attack.kind", "\"none\", \"flooding\", \"blackhole\", \"sleep_deprivation\" or \"packet_drop\""),
    ("attack.count", "number of attackers drawn at random when attack.nodes is empty"),
    ("attack.nodes", "explicit attacker ids"),
    ("attack.placement", "\"random\", or \"relay\" for the nodes that forwarded the most data in the window before the start"),
    ("attack.start", "attack start, s (default: end of warm-up)"),
    ("attack.stop", "attack stop, s (default: end of run)"),
    ("attack.flood_rate", "flooding RREQs per second"),
    ("attack.sd_rate", "sleep-deprivation packets per second"),
    ("attack.sd_victim", "sleep-deprivation victim id (default: random)"),
    ("attack.drop_prob", "packet-drop probability"),
    ("routing.route_lifetime", "route lifetime, s"),
    ("routing.rreq_ttl", "RREQ hop limit"),
    ("routing.retry_interval", "route discovery retry interval, s"),
    ("routing.max_retries", "route discovery retries before dropping buffered packets"),
    ("routing.intermediate_reply", "allow intermediate nodes to answer RREQs"),
    ("routing.rebroadcast_jitter", "upper bound of RREQ relay jitter, s"),
    ("clustering.beacon_period", "head beacon period, s"),
    ("clustering.beacon_ttl", "beacon hop limit"),
    ("clustering.timeout", "implicit membership time-out, s"),
    ("trust.initial", "initial trust"),
    ("trust.penalty_step", "trust lost per unit of severity"),
    ("trust.recovery_rate", "trust regained per second"),
    ("trust.cap", "maximum trust"),
    ("trust.eligibility", "minimum trust to stand in an election"),
    ("election.base_period", "election period at zero speed, s; scaled by 5 / (5 + mean speed)"),
    ("election.ballot_window", "ballot collection window, s"),
    ("election.handover_retry", "handover retransmission timer, s"),
    ("agents.per_hop_timer", "agent deadline per itinerary node, s"),
    ("agents.max_retries", "agent re-dispatches after a loss"),
    ("agents.base_size", "agent size without results, bytes"),
    ("agents.result_size", "bytes added per carried result"),
    ("agents.itinerary_cap", "maximum itinerary length"),
    ("detection.window", "anomaly window length, s"),
    ("detection.min_samples", "minimum events per window before a metric is sampled"),
    ("detection.retention", "audit record retention, s"),
    ("detection.watchdog_deadline", "time allowed for a relay to forward, s"),
    ("detection.forward_ratio.lower_hard", "forward ratio below this raises an alert"),
    ("detection.forward_ratio.lower_soft", "forward ratio below this raises a suspicion"),
    ("detection.rreq_rate.upper_soft", "RREQ rate above this raises a suspicion, 1/s"),
    ("detection.rreq_rate.upper_hard", "RREQ rate above this raises an alert, 1/s"),
    ("detection.dest_rx_rate.upper_soft", "per-destination data rate above this raises a suspicion, 1/s"),
    ("detection.dest_rx_rate.upper_hard", "per-destination data rate above this raises an alert, 1/s"),
    ("detection.sig_bh.min_seq_gap", "forged-reply sequence gap"),
    ("detection.sig_fl.more_than", "RREQs from one origin per window for the flooding signature"),
    ("detection.sig_sd.more_than", "packets from one origin to one destination per window for the sleep-deprivation signature"),
    ("detection.anomaly_confidence", "confidence of local anomaly alerts"),
    ("detection.coop_confidence", "confidence of cooperative alerts"),
    ("detection.coop_quorum", "observers needed for a cooperative verdict"),
    ("detection.severity.misuse", "trust penalty severity for misuse reports"),
    ("detection.severity.anomaly", "trust penalty severity for anomaly reports"),
    ("detection.severity.cooperative", "trust penalty severity for cooperative alerts"),
    ("detection.report_retry", "report retransmission timer, s"),
    ("detection.learned_threshold", "evidence count for learned signatures"),
    ("response.escalate_on_cooperative", "isolate network-wide on cooperative alerts"),
    ("response.anomaly_reporters", "distinct anomaly reporters before a head isolates"),
    ("response.block_ttl", "block lifetime, s (default: rest of run)"),
    ("metrics.grace", "detection grace period after the attack stops, s"),
];

impl ScenarioConfig {
    fn slot(&mut self, key: &str) -> Option<Slot<'_>> {
        use Slot::*;
        Some(match key {
            "seed" => U64(&mut self.seed),
            "area.width" => F64(&mut self.area_width),
            "area.height" => F64(&mut self.area_height),
            "nodes.count" => Usize(&mut self.node_count),
            "nodes.positions" => Points(&mut self.positions),
            "radio.range" => F64(&mut self.radio.range),
            "radio.channel_bps" => F64(&mut self.radio.channel_bps),
            "radio.loss_prob" => F64(&mut self.radio.loss_prob),
            "radio.queue_capacity" => Usize(&mut self.radio.queue_capacity),
            "mobility.model" => Str(&mut self.mobility_model),
            "mobility.speed_min" => F64(&mut self.speed_min),
            "mobility.speed_max" => F64(&mut self.speed_max),
            "mobility.pause" => F64(&mut self.pause),
            "traffic.flow_count" => Usize(&mut self.flow_count),
            "traffic.rate" => F64(&mut self.traffic_rate),
            "traffic.pkt_size" => U32(&mut self.pkt_size),
            "traffic.buffer" => Usize(&mut self.routing.buffer_capacity),
            "traffic.start_jitter" => F64(&mut self.flow_start_jitter),
            "traffic.flows" => StrList(&mut self.flows),
            "duration.warmup" => F64(&mut self.warmup),
            "duration.test" => F64(&mut self.test),
            "attack.kind" => Str(&mut self.attack_kind),
            "attack.count" => Usize(&mut self.attack_count),
            "attack.nodes" => U32List(&mut self.attack_nodes),
            "attack.placement" => Str(&mut self.attack_placement),
            "attack.start" => OptF64(&mut self.attack_start),
            "attack.stop" => OptF64(&mut self.attack_stop),
            "attack.flood_rate" => F64(&mut self.flood_rate),
            "attack.sd_rate" => F64(&mut self.sd_rate),
            "attack.sd_victim" => OptU32(&mut self.sd_victim),
            "attack.drop_prob" => F64(&mut self.drop_prob),
            "routing.route_lifetime" => F64(&mut self.routing.route_lifetime),
            "routing.rreq_ttl" => U32(&mut self.routing.rreq_ttl),
            "routing.retry_interval" => F64(&mut self.routing.retry_interval),
            "routing.max_retries" => U32(&mut self.routing.max_retries),
            "routing.intermediate_reply" => Bool(&mut self.routing.intermediate_reply),
            "routing.rebroadcast_jitter" => F64(&mut self.routing.rebroadcast_jitter),
            "clustering.beacon_period" => F64(&mut self.clustering.beacon_period),
            "clustering.beacon_ttl" => U8(&mut self.clustering.beacon_ttl),
            "clustering.timeout" => F64(&mut self.clustering.timeout),
            "trust.initial" => F64(&mut self.trust.initial),
            "trust.penalty_step" => F64(&mut self.trust.penalty_step),
            "trust.recovery_rate" => F64(&mut self.trust.recovery_rate),
            "trust.cap" => F64(&mut self.trust.cap),
            "trust.eligibility" => F64(&mut self.trust.eligibility),
            "election.base_period" => F64(&mut self.election.base_period),
            "election.ballot_window" => F64(&mut self.election.ballot_window),
            "election.handover_retry" => F64(&mut self.election.handover_retry),
            "agents.per_hop_timer" => F64(&mut self.agents.per_hop_timer),
            "agents.max_retries" => U32(&mut self.agents.max_retries),
            "agents.base_size" => U32(&mut self.agents.base_size),
            "agents.result_size" => U32(&mut self.agents.result_size),
            "agents.itinerary_cap" => Usize(&mut self.agents.itinerary_cap),
            "detection.window" => F64(&mut self.detection.window),
            "detection.min_samples" => U32(&mut self.detection.min_samples),
            "detection.retention" => F64(&mut self.detection.retention),
            "detection.watchdog_deadline" => F64(&mut self.detection.watchdog_deadline),
            "detection.forward_ratio.lower_hard" => F64(&mut self.detection.fwd_lower_hard),
            "detection.forward_ratio.lower_soft" => F64(&mut self.detection.fwd_lower_soft),
            "detection.rreq_rate.upper_soft" => F64(&mut self.detection.rreq_upper_soft),
            "detection.rreq_rate.upper_hard" => F64(&mut self.detection.rreq_upper_hard),
            "detection.dest_rx_rate.upper_soft" => F64(&mut self.detection.drx_upper_soft),
            "detection.dest_rx_rate.upper_hard" => F64(&mut self.detection.drx_upper_hard),
            "detection.sig_bh.min_seq_gap" => U32(&mut self.detection.bh_min_seq_gap),
            "detection.sig_fl.more_than" => Usize(&mut self.detection.fl_more_than),
            "detection.sig_sd.more_than" => Usize(&mut self.detection.sd_more_than),
            "detection.anomaly_confidence" => F64(&mut self.detection.anomaly_confidence),
            "detection.coop_confidence" => F64(&mut self.detection.coop_confidence),
            "detection.coop_quorum" => Usize(&mut self.detection.coop_quorum),
            "detection.severity.misuse" => F64(&mut self.detection.severity_misuse),
            "detection.severity.anomaly" => F64(&mut self.detection.severity_anomaly),
            "detection.severity.cooperative" => F64(&mut self.detection.severity_coop),
            "detection.report_retry" => F64(&mut self.detection.report_retry),
            "detection.learned_threshold" => Usize(&mut self.detection.learned_threshold),
            "response.escalate_on_cooperative" => Bool(&mut self.response.escalate_on_cooperative),
            "response.anomaly_reporters" => Usize(&mut self.response.anomaly_reporters),
            "response.block_ttl" => OptF64(&mut self.response.block_ttl),
            "metrics.grace" => F64(&mut self.grace),
            _ => return None,
        })
    }
}

fn int_of(key: &str, v: &toml::Value) -> Result<i64> {
    v.as_integer()
        .ok_or_else(|| Error::config(key, format!("expected an integer, got {v}")))
}

fn float_of(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(key, format!("expected a number, got {v}"))),
    }
}

fn non_negative<T: TryFrom<i64>>(key: &str, v: &toml::Value) -> Result<T> {
    let i = int_of(key, v)?;
    T::try_from(i).map_err(|_| Error::config(key, format!("{i} out of range")))
}

fn array_of<'v>(key: &str, v: &'v toml::Value) -> Result<&'v Vec<toml::Value>> {
    v.as_array()
        .ok_or_else(|| Error::config(key, format!("expected an array, got {v}")))
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, toml::Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn fmt_f64(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E']) || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

/// A parsed explicit flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub start: f64,
}

impl FlowSpec {
    /// Parses `"src>dst@start"`; `@start` is optional.
    pub fn parse(s: &str) -> std::result::Result<FlowSpec, String> {
        let (pair, start) = match s.split_once('@') {
            Some((p, t)) => (p, t.trim().parse::<f64>().map_err(|e| format!("bad start in {s:?}: {e}"))?),
            None => (s, 0.0),
        };
        let (a, b) = pair
            .split_once('>')
            .ok_or_else(|| format!("flow {s:?} is not \"src>dst@start\""))?;
        let src = a.trim().parse::<u32>().map_err(|e| format!("bad src in {s:?}: {e}"))?;
        let dst = b.trim().parse::<u32>().map_err(|e| format!("bad dst in {s:?}: {e}"))?;
        Ok(FlowSpec {
            src: NodeId(src),
            dst: NodeId(dst),
            start,
        })
    }
}

impl ScenarioConfig {
    /// Parses scenario text. Missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        let mut entries = Vec::new();
        flatten("", &table, &mut entries);
        let mut cfg = ScenarioConfig::default();
        for (k, v) in &entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Sets one dotted key from a TOML value.
    pub fn set(&mut self, key: &str, v: &toml::Value) -> Result<()> {
        let Some(slot) = self.slot(key) else {
            return Err(Error::config(key, "unknown key"));
        };
        match slot {
            Slot::F64(r) => *r = float_of(key, v)?,
            Slot::OptF64(r) => *r = Some(float_of(key, v)?),
            Slot::U64(r) => *r = non_negative(key, v)?,
            Slot::U32(r) => *r = non_negative(key, v)?,
            Slot::U8(r) => *r = non_negative(key, v)?,
            Slot::Usize(r) => *r = non_negative(key, v)?,
            Slot::OptU32(r) => *r = Some(non_negative(key, v)?),
            Slot::Bool(r) => {
                *r = v
                    .as_bool()
                    .ok_or_else(|| Error::config(key, format!("expected true or false, got {v}")))?
            }
            Slot::Str(r) => {
                *r = v
                    .as_str()
                    .ok_or_else(|| Error::config(key, format!("expected a string, got {v}")))?
                    .to_string()
            }
            Slot::StrList(r) => {
                let mut out = Vec::new();
                for item in array_of(key, v)? {
                    out.push(
                        item.as_str()
                            .ok_or_else(|| Error::config(key, format!("expected strings, got {item}")))?
                            .to_string(),
                    );
                }
                *r = out;
            }
            Slot::U32List(r) => {
                let mut out = Vec::new();
                for item in array_of(key, v)? {
                    out.push(non_negative(key, item)?);
                }
                *r = out;
            }
            Slot::Points(r) => {
                let mut out = Vec::new();
                for item in array_of(key, v)? {
                    let pair = array_of(key, item)?;
                    if pair.len() != 2 {
                        return Err(Error::config(key, format!("expected [x, y], got {item}")));
                    }
                    out.push([float_of(key, &pair[0])?, float_of(key, &pair[1])?]);
                }
                *r = out;
            }
        }
        Ok(())
    }

    /// Current value of `key` as TOML text, `None` when unset.
    pub fn get(&mut self, key: &str) -> Option<String> {
        let slot = self.slot(key)?;
        let quote = |s: &str| toml::Value::String(s.to_string()).to_string();
        match slot {
            Slot::F64(r) => Some(fmt_f64(*r)),
            Slot::OptF64(r) => r.map(fmt_f64),
            Slot::U64(r) => Some(r.to_string()),
            Slot::U32(r) => Some(r.to_string()),
            Slot::U8(r) => Some(r.to_string()),
            Slot::Usize(r) => Some(r.to_string()),
            Slot::OptU32(r) => r.map(|v| v.to_string()),
            Slot::Bool(r) => Some(r.to_string()),
            Slot::Str(r) => Some(quote(r)),
            Slot::StrList(r) => Some(format!(
                "[{}]",
                r.iter().map(|s| quote(s)).collect::<Vec<_>>().join(", ")
            )),
            Slot::U32List(r) => Some(format!(
                "[{}]",
                r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
            )),
            Slot::Points(r) => Some(format!(
                "[{}]",
                r.iter()
                    .map(|[x, y]| format!("[{}, {}]", fmt_f64(*x), fmt_f64(*y)))
                    .collect::<Vec<_>>()
                    .join(", ")
            )),
        }
    }

    /// The full effective configuration as scenario text.
    pub fn to_toml_string(&self) -> String {
        let mut me = self.clone();
        let mut out = String::new();
        for (key, _) in KEYS {
            match me.get(key) {
                Some(v) => writeln!(out, "{key} = {v}").unwrap(),
                None => writeln!(out, "# {key} unset").unwrap(),
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let err = |k: &str, r: String| Err(Error::config(k, r));
        if self.node_count == 0 {
            return err("nodes.count", "must be at least 1, got 0".into());
        }
        for (k, v) in [("area.width", self.area_width), ("area.height", self.area_height)] {
            if !(v > 0.0 && v.is_finite()) {
                return err(k, format!("must be positive, got {v}"));
            }
        }
        if !self.positions.is_empty() {
            if self.positions.len() != self.node_count {
                return err(
                    "nodes.positions",
                    format!("{} positions for {} nodes", self.positions.len(), self.node_count),
                );
            }
            let area = self.area();
            if let Some(p) = self.positions.iter().find(|[x, y]| !area.contains(&Position::new(*x, *y))) {
                return err("nodes.positions", format!("{p:?} outside the area"));
            }
        }
        let positive = [
            ("radio.range", self.radio.range),
            ("radio.channel_bps", self.radio.channel_bps),
            ("traffic.rate", self.traffic_rate),
            ("duration.test", self.test),
            ("routing.route_lifetime", self.routing.route_lifetime),
            ("routing.retry_interval", self.routing.retry_interval),
            ("clustering.beacon_period", self.clustering.beacon_period),
            ("clustering.timeout", self.clustering.timeout),
            ("election.base_period", self.election.base_period),
            ("election.ballot_window", self.election.ballot_window),
            ("election.handover_retry", self.election.handover_retry),
            ("agents.per_hop_timer", self.agents.per_hop_timer),
            ("detection.window", self.detection.window),
            ("detection.retention", self.detection.retention),
            ("detection.watchdog_deadline", self.detection.watchdog_deadline),
            ("detection.report_retry", self.detection.report_retry),
            ("attack.flood_rate", self.flood_rate),
            ("attack.sd_rate", self.sd_rate),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return err(k, format!("must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("mobility.pause", self.pause),
            ("traffic.start_jitter", self.flow_start_jitter),
            ("duration.warmup", self.warmup),
            ("routing.rebroadcast_jitter", self.routing.rebroadcast_jitter),
            ("trust.penalty_step", self.trust.penalty_step),
            ("trust.recovery_rate", self.trust.recovery_rate),
            ("detection.severity.misuse", self.detection.severity_misuse),
            ("detection.severity.anomaly", self.detection.severity_anomaly),
            ("detection.severity.cooperative", self.detection.severity_coop),
            ("metrics.grace", self.grace),
        ];
        for (k, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return err(k, format!("must be non-negative, got {v}"));
            }
        }
        for (k, v) in [
            ("radio.loss_prob", self.radio.loss_prob),
            ("attack.drop_prob", self.drop_prob),
            ("trust.initial", self.trust.initial),
            ("trust.cap", self.trust.cap),
            ("trust.eligibility", self.trust.eligibility),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return err(k, format!("must be within [0, 1], got {v}"));
            }
        }
        for (k, v) in [
            ("detection.anomaly_confidence", self.detection.anomaly_confidence),
            ("detection.coop_confidence", self.detection.coop_confidence),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return err(k, format!("must be within (0, 1], got {v}"));
            }
        }
        if self.trust.initial > self.trust.cap {
            return err("trust.initial", format!("{} above trust.cap {}", self.trust.initial, self.trust.cap));
        }
        match self.mobility_model.as_str() {
            "static" => {}
            "random_waypoint" => {
                if self.speed_min.is_nan() || self.speed_min <= 0.0 {
                    return err("mobility.speed_min", format!("must be positive, got {}", self.speed_min));
                }
                if self.speed_max < self.speed_min {
                    return err(
                        "mobility.speed_max",
                        format!("{} below mobility.speed_min {}", self.speed_max, self.speed_min),
                    );
                }
            }
            other => return err("mobility.model", format!("unknown model {other:?}")),
        }
        if self.pkt_size == 0 {
            return err("traffic.pkt_size", "must be positive, got 0".into());
        }
        if self.routing.buffer_capacity == 0 {
            return err("traffic.buffer", "must be positive, got 0".into());
        }
        if self.radio.queue_capacity == 0 {
            return err("radio.queue_capacity", "must be positive, got 0".into());
        }
        if self.clustering.beacon_ttl == 0 {
            return err("clustering.beacon_ttl", "must be at least 1, got 0".into());
        }
        if self.agents.itinerary_cap == 0 {
            return err("agents.itinerary_cap", "must be at least 1, got 0".into());
        }
        if self.detection.coop_quorum == 0 {
            return err("detection.coop_quorum", "must be at least 1, got 0".into());
        }
        if self.node_count < 2 && (self.flow_count > 0 || !self.flows.is_empty()) && self.flows.is_empty() {
            return err("traffic.flow_count", "flows need at least 2 nodes".into());
        }
        for f in &self.flows {
            let spec = FlowSpec::parse(f).map_err(|r| Error::config("traffic.flows", r))?;
            if spec.src.index() >= self.node_count || spec.dst.index() >= self.node_count || spec.src == spec.dst {
                return err("traffic.flows", format!("invalid endpoints in {f:?}"));
            }
            if spec.start.is_nan() || spec.start < 0.0 {
                return err("traffic.flows", format!("negative start in {f:?}"));
            }
        }
        for rule in self.detection_config().rules {
            rule.validate().map_err(|r| Error::config(format!("detection.{}", rule.metric.as_str()), r))?;
        }
        let end = self.end();
        match self.attack_kind.as_str() {
            "none" => {}
            "flooding" | "blackhole" | "sleep_deprivation" | "packet_drop" => {
                let (start, stop) = self.attack_window();
                if !(start >= 0.0 && start < stop) {
                    return err("attack.start", format!("window [{start}, {stop}) is empty"));
                }
                if stop > end {
                    return err("attack.stop", format!("{stop} after the end of the run {end}"));
                }
                if let Some(bad) = self.attack_nodes.iter().find(|n| **n as usize >= self.node_count) {
                    return err("attack.nodes", format!("node {bad} does not exist"));
                }
                let mut uniq = self.attack_nodes.clone();
                uniq.sort();
                uniq.dedup();
                if uniq.len() != self.attack_nodes.len() {
                    return err("attack.nodes", "duplicate attacker".into());
                }
                if self.attack_nodes.is_empty() && (self.attack_count == 0 || self.attack_count >= self.node_count) {
                    return err(
                        "attack.count",
                        format!("must be within [1, {}), got {}", self.node_count, self.attack_count),
                    );
                }
                if let Some(v) = self.sd_victim {
                    if v as usize >= self.node_count {
                        return err("attack.sd_victim", format!("node {v} does not exist"));
                    }
                    if self.attack_nodes.contains(&v) {
                        return err("attack.sd_victim", format!("node {v} is also an attacker"));
                    }
                }
            }
            other => return err("attack.kind", format!("unknown attack {other:?}")),
        }
        if !matches!(self.attack_placement.as_str(), "random" | "relay") {
            return err("attack.placement", format!("unknown placement {:?}", self.attack_placement));
        }
        Ok(())
    }

    pub fn area(&self) -> Area {
        Area {
            width: self.area_width,
            height: self.area_height,
        }
    }

    pub fn end(&self) -> f64 {
        self.warmup + self.test
    }

    pub fn mobility(&self) -> MobilityModel {
        match self.mobility_model.as_str() {
            "static" => MobilityModel::Static,
            _ => MobilityModel::RandomWaypoint {
                speed_min: self.speed_min,
                speed_max: self.speed_max,
                pause: self.pause,
            },
        }
    }

    pub fn fixed_positions(&self) -> Option<Vec<Position>> {
        (!self.positions.is_empty()).then(|| self.positions.iter().map(|[x, y]| Position::new(*x, *y)).collect())
    }

    pub fn explicit_flows(&self) -> Vec<FlowSpec> {
        self.flows.iter().filter_map(|f| FlowSpec::parse(f).ok()).collect()
    }

    pub fn attack_window(&self) -> (f64, f64) {
        (
            self.attack_start.unwrap_or(self.warmup),
            self.attack_stop.unwrap_or(self.end()),
        )
    }

    pub fn has_attack(&self) -> bool {
        self.attack_kind != "none"
    }

    /// Attack schedule for `node`; the sleep-deprivation victim is resolved
    /// by the caller.
    pub fn schedule_for(&self, node: NodeId, victim: NodeId) -> Option<AttackSchedule> {
        let kind = match self.attack_kind.as_str() {
            "flooding" => AttackKind::Flooding {
                rreq_rate: self.flood_rate,
            },
            "blackhole" => AttackKind::Blackhole,
            "sleep_deprivation" => AttackKind::SleepDeprivation {
                victim,
                rate: self.sd_rate,
            },
            "packet_drop" => AttackKind::PacketDrop {
                drop_prob: self.drop_prob,
            },
            _ => return None,
        };
        let (start, stop) = self.attack_window();
        Some(AttackSchedule {
            node,
            kind,
            start: SimTime::from_secs(start),
            stop: SimTime::from_secs(stop),
        })
    }

    pub fn detection_config(&self) -> DetectionConfig {
        let k = &self.detection;
        let mut rules = AnomalyRule::defaults();
        for r in &mut rules {
            r.window_len = k.window;
            r.min_samples = k.min_samples;
        }
        rules[0].lower_hard = Some(k.fwd_lower_hard);
        rules[0].lower_soft = Some(k.fwd_lower_soft);
        rules[1].upper_soft = Some(k.rreq_upper_soft);
        rules[1].upper_hard = Some(k.rreq_upper_hard);
        rules[2].upper_soft = Some(k.drx_upper_soft);
        rules[2].upper_hard = Some(k.drx_upper_hard);
        DetectionConfig {
            window: k.window,
            retention: k.retention,
            watchdog_deadline: k.watchdog_deadline,
            signatures: vec![
                MisuseSignature::blackhole(k.bh_min_seq_gap),
                MisuseSignature::flooding(k.fl_more_than, k.window),
                MisuseSignature::sleep_deprivation(k.sd_more_than, k.window),
            ],
            rules,
            anomaly_confidence: k.anomaly_confidence,
            misuse_confidence: 1.0,
            coop_confidence: k.coop_confidence,
            coop_quorum: k.coop_quorum,
            severity_misuse: k.severity_misuse,
            severity_anomaly: k.severity_anomaly,
            severity_coop: k.severity_coop,
            report_retry: k.report_retry,
            learned_threshold: k.learned_threshold,
        }
    }

    /// Key reference with defaults, for `--help`.
    pub fn key_reference() -> String {
        let mut d = ScenarioConfig::default();
        let mut out = String::from("Scenario keys (TOML, dotted names):\n");
        for (key, doc) in KEYS {
            let v = d.get(key).unwrap_or_else(|| "unset".into());
            writeln!(out, "  {key} = {v}\n      {doc}").unwrap();
        }
        out
    }
}

//! Local and cooperative intrusion detection.
//!
//! Each node keeps an [`InterpreterBase`] (signatures, anomaly rules and
//! learned entries) and a [`Detector`] that stores audit records per layer,
//! matches misuse signatures as records arrive and evaluates anomaly rules
//! whenever a window closes. Only the network layer ships rules; the other
//! layers accept records and run whatever [`LayerRule`] plugins are
//! installed.

mod cooperative;
pub mod watchdog;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

pub use cooperative::{build_itinerary, cooperative_verdict, median, CoopVerdict};
pub use watchdog::{Handoff, Tally, Watchdog};

use crate::kernel::SimTime;
use crate::routing::{RouteReply, RouteRequest};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Layer {
    Application,
    Transport,
    Network,
    DataLink,
    Physical,
}

impl Layer {
    pub const ALL: [Layer; 5] = [
        Layer::Application,
        Layer::Transport,
        Layer::Network,
        Layer::DataLink,
        Layer::Physical,
    ];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AuditKind {
    RreqSeen,
    RrepSeen,
    DataForwardHandoff,
    DataForwardDone,
    DataForwardMissed,
    DataRx,
    Custom(&'static str),
}

impl AuditKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditKind::RreqSeen => "rreq_seen",
            AuditKind::RrepSeen => "rrep_seen",
            AuditKind::DataForwardHandoff => "data_forward_handoff",
            AuditKind::DataForwardDone => "data_forward_done",
            AuditKind::DataForwardMissed => "data_forward_missed",
            AuditKind::DataRx => "data_rx",
            AuditKind::Custom(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRecord {
    pub time: SimTime,
    pub layer: Layer,
    pub kind: AuditKind,
    /// The node being observed.
    pub actor: NodeId,
    pub observer: NodeId,
    pub fields: Vec<(&'static str, f64)>,
}

impl AuditRecord {
    pub fn field(&self, name: &str) -> Option<f64> {
        self.fields.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackLabel {
    Flooding,
    Blackhole,
    SleepDeprivation,
    PacketDrop,
}

impl AttackLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackLabel::Flooding => "flooding",
            AttackLabel::Blackhole => "blackhole",
            AttackLabel::SleepDeprivation => "sleep-deprivation",
            AttackLabel::PacketDrop => "packet-drop",
        }
    }
}

impl fmt::Display for AttackLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    ForwardRatio,
    RreqRate,
    DestRxRate,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::ForwardRatio => "forward_ratio",
            Metric::RreqRate => "rreq_rate",
            Metric::DestRxRate => "dest_rx_rate",
        }
    }

    /// Audit records that evidence a violation of this metric.
    pub fn evidence(self) -> AuditKind {
        match self {
            Metric::ForwardRatio => AuditKind::DataForwardMissed,
            Metric::RreqRate => AuditKind::RreqSeen,
            Metric::DestRxRate => AuditKind::DataRx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Normal,
    Soft,
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyRule {
    pub rule_id: String,
    pub metric: Metric,
    pub window_len: f64,
    pub lower_hard: Option<f64>,
    pub lower_soft: Option<f64>,
    pub upper_soft: Option<f64>,
    pub upper_hard: Option<f64>,
    pub min_samples: u32,
    pub label: AttackLabel,
}

impl AnomalyRule {
    pub fn forward_ratio() -> Self {
        AnomalyRule {
            rule_id: "ANOM-FWD".into(),
            metric: Metric::ForwardRatio,
            window_len: 10.0,
            lower_hard: Some(0.25),
            lower_soft: Some(0.5),
            upper_soft: None,
            upper_hard: None,
            min_samples: 5,
            label: AttackLabel::PacketDrop,
        }
    }

    pub fn rreq_rate() -> Self {
        AnomalyRule {
            rule_id: "ANOM-RREQ".into(),
            metric: Metric::RreqRate,
            window_len: 10.0,
            lower_hard: None,
            lower_soft: None,
            upper_soft: Some(5.0),
            upper_hard: Some(10.0),
            min_samples: 5,
            label: AttackLabel::Flooding,
        }
    }

    pub fn dest_rx_rate() -> Self {
        AnomalyRule {
            rule_id: "ANOM-DRX".into(),
            metric: Metric::DestRxRate,
            window_len: 10.0,
            lower_hard: None,
            lower_soft: None,
            upper_soft: Some(10.0),
            upper_hard: Some(20.0),
            min_samples: 5,
            label: AttackLabel::SleepDeprivation,
        }
    }

    pub fn defaults() -> Vec<AnomalyRule> {
        vec![Self::forward_ratio(), Self::rreq_rate(), Self::dest_rx_rate()]
    }

    /// Checks the threshold ordering invariants.
    pub fn validate(&self) -> Result<(), String> {
        let bounds = [self.lower_hard, self.lower_soft, self.upper_soft, self.upper_hard];
        if bounds.iter().all(Option::is_none) {
            return Err(format!("{}: no bound set", self.rule_id));
        }
        if let (Some(h), Some(s)) = (self.lower_hard, self.lower_soft) {
            if h > s {
                return Err(format!("{}: lower_hard {} above lower_soft {}", self.rule_id, h, s));
            }
        }
        if let (Some(s), Some(h)) = (self.upper_soft, self.upper_hard) {
            if s > h {
                return Err(format!("{}: upper_soft {} above upper_hard {}", self.rule_id, s, h));
            }
        }
        if self.window_len <= 0.0 {
            return Err(format!("{}: window_len must be positive", self.rule_id));
        }
        Ok(())
    }

    pub fn classify(&self, v: f64) -> Band {
        let below = |b: Option<f64>| b.is_some_and(|b| v < b);
        let above = |b: Option<f64>| b.is_some_and(|b| v > b);
        if below(self.lower_hard) || above(self.upper_hard) {
            Band::Hard
        } else if below(self.lower_soft) || above(self.upper_soft) {
            Band::Soft
        } else {
            Band::Normal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupBy {
    Actor,
    /// Actor plus the value of a record field, e.g. the destination.
    ActorAnd(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    /// A route reply claiming a sequence number far beyond anything the
    /// target itself announced, from a sender claiming to be next to it.
    ForgedReply { min_seq_gap: u32, hop_count: u32 },
    /// More than `more_than` records of `kind` per group within `window`.
    CountInWindow {
        kind: AuditKind,
        group: GroupBy,
        more_than: usize,
        window: f64,
    },
    /// At least `at_least` records of `kind` by one specific node within
    /// `window`. Produced by learning.
    SuspectPattern {
        suspect: NodeId,
        kind: AuditKind,
        at_least: usize,
        window: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MisuseSignature {
    pub sig_id: String,
    pub layer: Layer,
    pub predicate: Predicate,
    pub label: AttackLabel,
}

impl MisuseSignature {
    pub fn blackhole(min_seq_gap: u32) -> Self {
        MisuseSignature {
            sig_id: "SIG-BH".into(),
            layer: Layer::Network,
            predicate: Predicate::ForgedReply {
                min_seq_gap,
                hop_count: 1,
            },
            label: AttackLabel::Blackhole,
        }
    }

    pub fn flooding(more_than: usize, window: f64) -> Self {
        MisuseSignature {
            sig_id: "SIG-FL".into(),
            layer: Layer::Network,
            predicate: Predicate::CountInWindow {
                kind: AuditKind::RreqSeen,
                group: GroupBy::Actor,
                more_than,
                window,
            },
            label: AttackLabel::Flooding,
        }
    }

    pub fn sleep_deprivation(more_than: usize, window: f64) -> Self {
        MisuseSignature {
            sig_id: "SIG-SD".into(),
            layer: Layer::Network,
            predicate: Predicate::CountInWindow {
                kind: AuditKind::DataRx,
                group: GroupBy::ActorAnd("dst"),
                more_than,
                window,
            },
            label: AttackLabel::SleepDeprivation,
        }
    }

    pub fn defaults() -> Vec<MisuseSignature> {
        vec![
            Self::blackhole(1000),
            Self::flooding(50, 10.0),
            Self::sleep_deprivation(200, 10.0),
        ]
    }

    /// Suspect-specific signature derived from a confirmed cooperative alert.
    pub fn learned(suspect: NodeId, metric: Metric, label: AttackLabel, at_least: usize, window: f64) -> Self {
        MisuseSignature {
            sig_id: format!("LRN-{}-{}", metric.as_str(), suspect),
            layer: Layer::Network,
            predicate: Predicate::SuspectPattern {
                suspect,
                kind: metric.evidence(),
                at_least,
                window,
            },
            label,
        }
    }

    pub fn wire_size(&self) -> u32 {
        24
    }
}

/// Signatures, rules and learned entries known to one node.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpreterBase {
    pub signatures: Vec<MisuseSignature>,
    pub rules: Vec<AnomalyRule>,
    pub learned: BTreeSet<String>,
    pub version: u64,
}

impl InterpreterBase {
    pub fn new(signatures: Vec<MisuseSignature>, rules: Vec<AnomalyRule>) -> Self {
        InterpreterBase {
            signatures,
            rules,
            learned: BTreeSet::new(),
            version: 0,
        }
    }

    pub fn knows(&self, sig_id: &str) -> bool {
        self.signatures.iter().any(|s| s.sig_id == sig_id)
    }

    /// Adds a learned signature. Returns false if it was already known.
    pub fn learn(&mut self, sig: MisuseSignature) -> bool {
        if self.knows(&sig.sig_id) {
            return false;
        }
        self.learned.insert(sig.sig_id.clone());
        self.signatures.push(sig);
        self.version += 1;
        true
    }

    pub fn learned_signatures(&self) -> Vec<MisuseSignature> {
        self.signatures
            .iter()
            .filter(|s| self.learned.contains(&s.sig_id))
            .cloned()
            .collect()
    }

    /// Merges a delta from the head. Known ids are skipped; the version
    /// follows the sender's.
    pub fn merge(&mut self, sigs: &[MisuseSignature], version: u64) -> usize {
        let mut added = 0;
        for s in sigs {
            if !self.knows(&s.sig_id) {
                self.learned.insert(s.sig_id.clone());
                self.signatures.push(s.clone());
                added += 1;
            }
        }
        self.version = self.version.max(version);
        added
    }

    pub fn rule(&self, metric: Metric) -> Option<&AnomalyRule> {
        self.rules.iter().find(|r| r.metric == metric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    LocalMisuse,
    LocalAnomaly,
    Cooperative,
}

impl DetectorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::LocalMisuse => "local_misuse",
            DetectorKind::LocalAnomaly => "local_anomaly",
            DetectorKind::Cooperative => "cooperative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub time: SimTime,
    pub detector: DetectorKind,
    pub reporter: NodeId,
    pub suspect: NodeId,
    pub label: AttackLabel,
    pub confidence: f64,
    /// Signature or rule that fired.
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suspicion {
    pub time: SimTime,
    pub observer: NodeId,
    pub suspect: NodeId,
    pub metric: Metric,
    pub window: (SimTime, SimTime),
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    Alert(Alert),
    Suspicion(Suspicion),
}

/// One metric value computed at window close.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub observer: NodeId,
    pub suspect: NodeId,
    pub metric: Metric,
    pub window_start: SimTime,
    pub value: f64,
    pub count: u32,
}

/// Rule plugin for any layer.
pub trait LayerRule: Send {
    fn layer(&self) -> Layer;
    /// Looks at the newly stored record with the layer's retained history.
    fn check(&mut self, rec: &AuditRecord, history: &VecDeque<AuditRecord>) -> Option<(NodeId, AttackLabel)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub window: f64,
    pub retention: f64,
    pub watchdog_deadline: f64,
    pub signatures: Vec<MisuseSignature>,
    pub rules: Vec<AnomalyRule>,
    pub anomaly_confidence: f64,
    pub misuse_confidence: f64,
    pub coop_confidence: f64,
    pub coop_quorum: usize,
    pub severity_misuse: f64,
    pub severity_anomaly: f64,
    pub severity_coop: f64,
    pub report_retry: f64,
    /// Evidence count for learned signatures.
    pub learned_threshold: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            window: 10.0,
            retention: 60.0,
            watchdog_deadline: 0.5,
            signatures: MisuseSignature::defaults(),
            rules: AnomalyRule::defaults(),
            anomaly_confidence: 0.9,
            misuse_confidence: 1.0,
            coop_confidence: 0.8,
            coop_quorum: 2,
            severity_misuse: 1.0,
            severity_anomaly: 0.5,
            severity_coop: 1.0,
            report_retry: 2.0,
            learned_threshold: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct CountKey {
    sig: usize,
    actor: NodeId,
    extra: u64,
}

/// Per-node detection engine.
pub struct Detector {
    id: NodeId,
    cfg: DetectionConfig,
    pub base: InterpreterBase,
    stores: [VecDeque<AuditRecord>; 5],
    best_known: HashMap<NodeId, u32>,
    counters: HashMap<CountKey, VecDeque<SimTime>>,
    last_alert: HashMap<(String, NodeId), SimTime>,
    pub watchdog: Watchdog,
    rreq_counts: BTreeMap<(u64, NodeId), u32>,
    rx_counts: BTreeMap<(u64, NodeId, NodeId), u32>,
    plugins: Vec<Box<dyn LayerRule>>,
}

impl fmt::Debug for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Detector")
            .field("id", &self.id)
            .field("base_version", &self.base.version)
            .finish_non_exhaustive()
    }
}

impl Detector {
    pub fn new(id: NodeId, cfg: DetectionConfig) -> Self {
        let base = InterpreterBase::new(cfg.signatures.clone(), cfg.rules.clone());
        let watchdog = Watchdog::new(cfg.watchdog_deadline, cfg.window);
        Detector {
            id,
            cfg,
            base,
            stores: Default::default(),
            best_known: HashMap::new(),
            counters: HashMap::new(),
            last_alert: HashMap::new(),
            watchdog,
            rreq_counts: BTreeMap::new(),
            rx_counts: BTreeMap::new(),
            plugins: Vec::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn config(&self) -> &DetectionConfig {
        &self.cfg
    }

    pub fn add_plugin(&mut self, rule: Box<dyn LayerRule>) {
        self.plugins.push(rule);
    }

    pub fn records(&self, layer: Layer) -> &VecDeque<AuditRecord> {
        &self.stores[layer.index()]
    }

    pub fn best_known_seq(&self, node: NodeId) -> Option<u32> {
        self.best_known.get(&node).copied()
    }

    pub fn window_of(&self, t: SimTime) -> u64 {
        (t.secs() / self.cfg.window).floor() as u64
    }

    fn record_of(&self, now: SimTime, kind: AuditKind, actor: NodeId, fields: Vec<(&'static str, f64)>) -> AuditRecord {
        AuditRecord {
            time: now,
            layer: Layer::Network,
            kind,
            actor,
            observer: self.id,
            fields,
        }
    }

    /// Stores a record and runs the matching for its layer. Returns the
    /// first alert, if any.
    pub fn record_audit(&mut self, rec: AuditRecord) -> Option<Alert> {
        let now = rec.time;
        let li = rec.layer.index();
        let keep = self.cfg.retention;
        let store = &mut self.stores[li];
        while store.front().is_some_and(|r| now.since(r.time) > keep) {
            store.pop_front();
        }
        store.push_back(rec.clone());
        let mut hit = None;
        if rec.layer == Layer::Network {
            hit = self.match_signatures(&rec);
        }
        if hit.is_none() {
            let store = &self.stores[li];
            for p in self.plugins.iter_mut().filter(|p| p.layer() == rec.layer) {
                if let Some((suspect, label)) = p.check(&rec, store) {
                    hit = Some((format!("PLUGIN-{:?}", rec.layer), suspect, label));
                    break;
                }
            }
        }
        let (source, suspect, label) = hit?;
        if suspect == self.id {
            return None;
        }
        if let Some(last) = self.last_alert.get(&(source.clone(), suspect)) {
            if now.since(*last) < self.cfg.window {
                return None;
            }
        }
        self.last_alert.insert((source.clone(), suspect), now);
        Some(Alert {
            time: now,
            detector: DetectorKind::LocalMisuse,
            reporter: self.id,
            suspect,
            label,
            confidence: self.cfg.misuse_confidence,
            source,
        })
    }

    fn match_signatures(&mut self, rec: &AuditRecord) -> Option<(String, NodeId, AttackLabel)> {
        let mut hit = None;
        for (i, sig) in self.base.signatures.iter().enumerate() {
            if sig.layer != rec.layer {
                continue;
            }
            let fired = match &sig.predicate {
                Predicate::ForgedReply { min_seq_gap, hop_count } => {
                    rec.kind == AuditKind::RrepSeen
                        && rec.field("hop_count") == Some(*hop_count as f64)
                        && match (rec.field("target_seq"), rec.field("best_known")) {
                            (Some(s), Some(b)) => s - b >= *min_seq_gap as f64,
                            _ => false,
                        }
                }
                Predicate::CountInWindow {
                    kind,
                    group,
                    more_than,
                    window,
                } => {
                    if rec.kind != *kind {
                        false
                    } else {
                        let extra = match group {
                            GroupBy::Actor => 0,
                            GroupBy::ActorAnd(f) => rec.field(f).unwrap_or(-1.0).to_bits(),
                        };
                        let key = CountKey {
                            sig: i,
                            actor: rec.actor,
                            extra,
                        };
                        let q = self.counters.entry(key).or_default();
                        q.push_back(rec.time);
                        while q.front().is_some_and(|t| rec.time.since(*t) >= *window) {
                            q.pop_front();
                        }
                        q.len() > *more_than
                    }
                }
                Predicate::SuspectPattern {
                    suspect,
                    kind,
                    at_least,
                    window,
                } => {
                    if rec.kind != *kind || rec.actor != *suspect {
                        false
                    } else {
                        let key = CountKey {
                            sig: i,
                            actor: rec.actor,
                            extra: 0,
                        };
                        let q = self.counters.entry(key).or_default();
                        q.push_back(rec.time);
                        while q.front().is_some_and(|t| rec.time.since(*t) >= *window) {
                            q.pop_front();
                        }
                        q.len() >= *at_least
                    }
                }
            };
            if fired && hit.is_none() {
                hit = Some((sig.sig_id.clone(), rec.actor, sig.label));
            }
        }
        hit
    }

    /// First sighting of a route request relayed by `from`.
    pub fn on_rreq_seen(&mut self, now: SimTime, from: NodeId, rreq: &RouteRequest) -> Option<Alert> {
        let origin = rreq.origin();
        let e = self.best_known.entry(origin).or_insert(rreq.origin_seq);
        *e = (*e).max(rreq.origin_seq);
        if origin == self.id {
            return None;
        }
        let w = self.window_of(now);
        *self.rreq_counts.entry((w, origin)).or_insert(0) += 1;
        let rec = self.record_of(
            now,
            AuditKind::RreqSeen,
            origin,
            vec![
                ("req_id", rreq.id.counter as f64),
                ("origin_seq", rreq.origin_seq as f64),
                ("from", from.0 as f64),
            ],
        );
        self.record_audit(rec)
    }

    /// A route reply sent by `from`, received or overheard.
    pub fn on_rrep_seen(&mut self, now: SimTime, from: NodeId, rrep: &RouteReply) -> Option<Alert> {
        let best = self.best_known.get(&rrep.target).copied().unwrap_or(0);
        let alert = if from == self.id {
            None
        } else {
            let rec = self.record_of(
                now,
                AuditKind::RrepSeen,
                from,
                vec![
                    ("target", rrep.target.0 as f64),
                    ("target_seq", rrep.target_seq as f64),
                    ("hop_count", rrep.hop_count as f64),
                    ("best_known", best as f64),
                ],
            );
            self.record_audit(rec)
        };
        // Only the target itself speaks for its own sequence number.
        if from == rrep.target && rrep.hop_count == 0 {
            let e = self.best_known.entry(rrep.target).or_insert(rrep.target_seq);
            *e = (*e).max(rrep.target_seq);
        }
        alert
    }

    /// A data packet on its last hop, from `origin` to `dst`.
    pub fn on_data_rx(&mut self, now: SimTime, origin: NodeId, dst: NodeId) -> Option<Alert> {
        if origin == self.id {
            return None;
        }
        let w = self.window_of(now);
        *self.rx_counts.entry((w, origin, dst)).or_insert(0) += 1;
        let rec = self.record_of(now, AuditKind::DataRx, origin, vec![("dst", dst.0 as f64)]);
        self.record_audit(rec)
    }

    pub fn on_handoff(&mut self, h: Handoff) -> Option<Alert> {
        self.watchdog.on_handoff(h);
        let rec = self.record_of(
            h.at,
            AuditKind::DataForwardHandoff,
            h.next,
            vec![("origin", h.origin.0 as f64), ("pid", h.pid as f64)],
        );
        self.record_audit(rec)
    }

    pub fn on_forward_overheard(&mut self, now: SimTime, from: NodeId, origin: NodeId, pid: u64) -> Option<Alert> {
        let h = self.watchdog.on_overheard(from, origin, pid, now)?;
        let rec = self.record_of(
            now,
            AuditKind::DataForwardDone,
            h.next,
            vec![("origin", h.origin.0 as f64), ("pid", h.pid as f64)],
        );
        self.record_audit(rec)
    }

    /// Resolves expired watchdog expectations into missed-forward records.
    pub fn sweep_watchdog(&mut self, now: SimTime) -> (Vec<Handoff>, Vec<Alert>) {
        let missed = self.watchdog.sweep(now);
        let mut alerts = Vec::new();
        for h in &missed {
            let rec = self.record_of(
                now,
                AuditKind::DataForwardMissed,
                h.next,
                vec![("origin", h.origin.0 as f64), ("pid", h.pid as f64)],
            );
            alerts.extend(self.record_audit(rec));
        }
        (missed, alerts)
    }

    /// Metric samples for window `w` plus what they imply.
    pub fn evaluate_window(&mut self, w: u64) -> (Vec<Sample>, Vec<Finding>) {
        let len = self.cfg.window;
        let start = SimTime::from_secs(w as f64 * len);
        let end = SimTime::from_secs((w + 1) as f64 * len);
        let mut samples = Vec::new();
        for rule in &self.base.rules {
            match rule.metric {
                Metric::ForwardRatio => {
                    for (suspect, t) in self.watchdog.window_tallies(w) {
                        if t.expected >= rule.min_samples {
                            samples.push(Sample {
                                observer: self.id,
                                suspect,
                                metric: rule.metric,
                                window_start: start,
                                value: t.forwarded as f64 / t.expected as f64,
                                count: t.expected,
                            });
                        }
                    }
                }
                Metric::RreqRate => {
                    for ((_, origin), c) in self.rreq_counts.range((w, NodeId(0))..=(w, NodeId(u32::MAX))) {
                        if *c >= rule.min_samples {
                            samples.push(Sample {
                                observer: self.id,
                                suspect: *origin,
                                metric: rule.metric,
                                window_start: start,
                                value: *c as f64 / len,
                                count: *c,
                            });
                        }
                    }
                }
                Metric::DestRxRate => {
                    let lo = (w, NodeId(0), NodeId(0));
                    let hi = (w, NodeId(u32::MAX), NodeId(u32::MAX));
                    for ((_, origin, _), c) in self.rx_counts.range(lo..=hi) {
                        if *c >= rule.min_samples {
                            samples.push(Sample {
                                observer: self.id,
                                suspect: *origin,
                                metric: rule.metric,
                                window_start: start,
                                value: *c as f64 / len,
                                count: *c,
                            });
                        }
                    }
                }
            }
        }
        let mut findings = Vec::new();
        let mut flagged = BTreeSet::new();
        for s in &samples {
            if s.suspect == self.id {
                continue;
            }
            let rule = self.base.rule(s.metric).expect("sample from a known rule");
            match rule.classify(s.value) {
                Band::Normal => {}
                Band::Hard => {
                    if flagged.insert((s.metric, s.suspect)) {
                        findings.push(Finding::Alert(Alert {
                            time: end,
                            detector: DetectorKind::LocalAnomaly,
                            reporter: self.id,
                            suspect: s.suspect,
                            label: rule.label,
                            confidence: self.cfg.anomaly_confidence,
                            source: rule.rule_id.clone(),
                        }));
                    }
                }
                Band::Soft => {
                    if flagged.insert((s.metric, s.suspect)) {
                        findings.push(Finding::Suspicion(Suspicion {
                            time: end,
                            observer: self.id,
                            suspect: s.suspect,
                            metric: s.metric,
                            window: (start, end),
                            value: s.value,
                        }));
                    }
                }
            }
        }
        self.prune(w);
        (samples, findings)
    }

    fn prune(&mut self, current: u64) {
        let keep = (self.cfg.retention / self.cfg.window).ceil() as u64;
        let Some(oldest) = current.checked_sub(keep) else {
            return;
        };
        self.watchdog.prune_before(oldest);
        self.rreq_counts = self.rreq_counts.split_off(&(oldest, NodeId(0)));
        self.rx_counts = self.rx_counts.split_off(&(oldest, NodeId(0), NodeId(0)));
    }

    /// Answers an agent query from this node's own records: the metric over
    /// the windows inside `window`, without the sample-count guard.
    pub fn observe(&self, metric: Metric, suspect: NodeId, window: (SimTime, SimTime)) -> Option<f64> {
        let w0 = self.window_of(window.0);
        let w1 = self.window_of(window.1).max(w0 + 1);
        let len = self.cfg.window * (w1 - w0) as f64;
        match metric {
            Metric::ForwardRatio => {
                let mut total = Tally::default();
                for w in w0..w1 {
                    let t = self.watchdog.tally(w, suspect);
                    total.expected += t.expected;
                    total.forwarded += t.forwarded;
                }
                total.ratio()
            }
            Metric::RreqRate => {
                let c: u32 = (w0..w1)
                    .filter_map(|w| self.rreq_counts.get(&(w, suspect)))
                    .sum();
                (c > 0).then(|| c as f64 / len)
            }
            Metric::DestRxRate => {
                let mut best: Option<u32> = None;
                for ((w, o, _), c) in &self.rx_counts {
                    if *o == suspect && (w0..w1).contains(w) {
                        best = Some(best.map_or(*c, |b| b.max(*c)));
                    }
                }
                best.map(|c| c as f64 / len)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::RreqId;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn det() -> Detector {
        Detector::new(n(0), DetectionConfig::default())
    }

    fn rreq(origin: u32, counter: u32, seq: u32) -> RouteRequest {
        RouteRequest {
            id: RreqId {
                origin: n(origin),
                counter,
            },
            target: n(9),
            origin_seq: seq,
            dst_seq: None,
            hop_count: 0,
        }
    }

    #[test]
    fn rreq_record_goes_to_network_store() {
        let mut d = det();
        assert!(d.on_rreq_seen(t(1.0), n(3), &rreq(3, 1, 1)).is_none());
        assert_eq!(d.records(Layer::Network).len(), 1);
        assert_eq!(d.records(Layer::Network)[0].kind, AuditKind::RreqSeen);
    }

    #[test]
    fn hook_layers_store_without_rules() {
        let mut d = det();
        let rec = AuditRecord {
            time: t(1.0),
            layer: Layer::Application,
            kind: AuditKind::Custom("login"),
            actor: n(4),
            observer: n(0),
            fields: vec![],
        };
        assert!(d.record_audit(rec).is_none());
        assert_eq!(d.records(Layer::Application).len(), 1);
    }

    #[test]
    fn retention_is_sixty_seconds() {
        let mut d = det();
        d.on_rreq_seen(t(0.0), n(3), &rreq(3, 1, 1));
        d.on_rreq_seen(t(30.0), n(3), &rreq(3, 2, 2));
        d.on_rreq_seen(t(61.0), n(3), &rreq(3, 3, 3));
        assert_eq!(d.records(Layer::Network).len(), 2);
    }

    struct Always;
    impl LayerRule for Always {
        fn layer(&self) -> Layer {
            Layer::Transport
        }
        fn check(&mut self, rec: &AuditRecord, _: &VecDeque<AuditRecord>) -> Option<(NodeId, AttackLabel)> {
            Some((rec.actor, AttackLabel::Flooding))
        }
    }

    #[test]
    fn plugins_run_on_their_layer() {
        let mut d = det();
        d.add_plugin(Box::new(Always));
        let rec = AuditRecord {
            time: t(1.0),
            layer: Layer::Transport,
            kind: AuditKind::Custom("syn"),
            actor: n(4),
            observer: n(0),
            fields: vec![],
        };
        let a = d.record_audit(rec).unwrap();
        assert_eq!(a.suspect, n(4));
    }

    #[test]
    fn forged_reply_matches_blackhole_signature() {
        let mut d = det();
        // The target announced seq 5 itself.
        d.on_rreq_seen(t(0.0), n(7), &rreq(7, 1, 5));
        let forged = RouteReply {
            origin: n(1),
            target: n(7),
            target_seq: 1005,
            hop_count: 1,
        };
        let a = d.on_rrep_seen(t(1.0), n(6), &forged).unwrap();
        assert_eq!(a.suspect, n(6));
        assert_eq!(a.label, AttackLabel::Blackhole);
        assert_eq!(a.confidence, 1.0);
    }

    #[test]
    fn honest_reply_does_not_match() {
        let mut d = det();
        d.on_rreq_seen(t(0.0), n(7), &rreq(7, 1, 5));
        let honest = RouteReply {
            origin: n(1),
            target: n(7),
            target_seq: 6,
            hop_count: 2,
        };
        assert!(d.on_rrep_seen(t(1.0), n(6), &honest).is_none());
    }

    #[test]
    fn sixty_requests_in_ten_seconds_is_flooding() {
        let mut d = det();
        let mut alerts = vec![];
        for i in 0..60 {
            alerts.extend(d.on_rreq_seen(t(i as f64 * 0.1), n(5), &rreq(5, i, 0)));
        }
        assert_eq!(alerts.len(), 1, "rate-limited to one per window");
        assert_eq!(alerts[0].label, AttackLabel::Flooding);
        assert_eq!(alerts[0].source, "SIG-FL");
    }

    #[test]
    fn classify_bands() {
        let fr = AnomalyRule::forward_ratio();
        assert_eq!(fr.classify(0.0), Band::Hard);
        assert_eq!(fr.classify(0.4), Band::Soft);
        assert_eq!(fr.classify(0.9), Band::Normal);
        let rr = AnomalyRule::rreq_rate();
        assert_eq!(rr.classify(50.0), Band::Hard);
        assert_eq!(rr.classify(7.0), Band::Soft);
    }

    #[test]
    fn window_evaluation_turns_samples_into_findings() {
        let mut d = det();
        for i in 0..20u64 {
            d.on_handoff(Handoff {
                at: t(i as f64 * 0.4),
                next: n(4),
                origin: n(1),
                pid: i,
                dst: n(8),
            });
        }
        d.sweep_watchdog(t(10.0));
        let (samples, findings) = d.evaluate_window(0);
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].value, 0.0);
        match &findings[..] {
            [Finding::Alert(a)] => {
                assert_eq!(a.detector, DetectorKind::LocalAnomaly);
                assert_eq!(a.label, AttackLabel::PacketDrop);
                assert_eq!(a.confidence, 0.9);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn few_handoffs_give_no_sample() {
        let mut d = det();
        for i in 0..3u64 {
            d.on_handoff(Handoff {
                at: t(i as f64),
                next: n(4),
                origin: n(1),
                pid: i,
                dst: n(8),
            });
        }
        d.sweep_watchdog(t(10.0));
        let (samples, _) = d.evaluate_window(0);
        assert!(samples.is_empty());
    }

    #[test]
    fn flood_rate_is_hard_anomaly() {
        let mut d = det();
        for i in 0..500 {
            d.on_rreq_seen(t(i as f64 * 0.02), n(5), &rreq(5, i, 0));
        }
        let (_, findings) = d.evaluate_window(0);
        assert!(findings.iter().any(|f| matches!(f, Finding::Alert(a) if a.label == AttackLabel::Flooding)));
    }

    #[test]
    fn learning_bumps_version_and_merge_is_idempotent() {
        let mut head = InterpreterBase::new(MisuseSignature::defaults(), AnomalyRule::defaults());
        let sig = MisuseSignature::learned(n(4), Metric::ForwardRatio, AttackLabel::Blackhole, 5, 10.0);
        assert!(head.learn(sig.clone()));
        assert!(!head.learn(sig));
        assert_eq!(head.version, 1);
        let mut member = InterpreterBase::new(MisuseSignature::defaults(), AnomalyRule::defaults());
        let delta = head.learned_signatures();
        assert_eq!(member.merge(&delta, head.version), 1);
        assert_eq!(member.merge(&delta, head.version), 0);
        assert_eq!(member.version, head.version);
        assert_eq!(member.signatures.len(), head.signatures.len());
    }

    #[test]
    fn learned_pattern_fires_on_suspect_misses() {
        let mut d = det();
        let sig = MisuseSignature::learned(n(4), Metric::ForwardRatio, AttackLabel::PacketDrop, 5, 10.0);
        d.base.learn(sig);
        for i in 0..5u64 {
            d.on_handoff(Handoff {
                at: t(i as f64 * 0.1),
                next: n(4),
                origin: n(1),
                pid: i,
                dst: n(8),
            });
        }
        let (_, alerts) = d.sweep_watchdog(t(1.0));
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].source, "LRN-forward_ratio-4");
    }

    #[test]
    fn rule_validation() {
        let mut r = AnomalyRule::forward_ratio();
        assert!(r.validate().is_ok());
        r.lower_hard = Some(0.9);
        assert!(r.validate().is_err());
        let empty = AnomalyRule {
            lower_hard: None,
            lower_soft: None,
            ..AnomalyRule::forward_ratio()
        };
        assert!(empty.validate().is_err());
    }
}

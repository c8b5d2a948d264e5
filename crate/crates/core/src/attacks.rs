//! Ground-truth attacker behaviors and their schedules.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::detection::AttackLabel;
use crate::error::{Error, Result};
use crate::kernel::SimTime;
use crate::routing::{RouteReply, RouteRequest};
use crate::NodeId;

/// Sequence-number inflation used by forged replies.
pub const FORGED_SEQ_BOOST: u32 = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    Flooding { rreq_rate: f64 },
    Blackhole,
    SleepDeprivation { victim: NodeId, rate: f64 },
    PacketDrop { drop_prob: f64 },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Flooding { .. } => "flooding",
            AttackKind::Blackhole => "blackhole",
            AttackKind::SleepDeprivation { .. } => "sleep_deprivation",
            AttackKind::PacketDrop { .. } => "packet_drop",
        }
    }

    pub fn label(&self) -> AttackLabel {
        match self {
            AttackKind::Flooding { .. } => AttackLabel::Flooding,
            AttackKind::Blackhole => AttackLabel::Blackhole,
            AttackKind::SleepDeprivation { .. } => AttackLabel::SleepDeprivation,
            AttackKind::PacketDrop { .. } => AttackLabel::PacketDrop,
        }
    }

    fn validate(&self, node: NodeId) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidAttack { node, reason });
        match *self {
            AttackKind::Flooding { rreq_rate } if rreq_rate.is_nan() || rreq_rate <= 0.0 => bad(format!("rreq_rate {rreq_rate} must be positive")),
            AttackKind::SleepDeprivation { rate, .. } if rate.is_nan() || rate <= 0.0 => bad(format!("rate {rate} must be positive")),
            AttackKind::SleepDeprivation { victim, .. } if victim == node => bad("victim is the attacker".into()),
            AttackKind::PacketDrop { drop_prob } if !(0.0..=1.0).contains(&drop_prob) => {
                bad(format!("drop_prob {drop_prob} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSchedule {
    pub node: NodeId,
    pub kind: AttackKind,
    pub start: SimTime,
    pub stop: SimTime,
}

impl AttackSchedule {
    pub fn is_active(&self, now: SimTime) -> bool {
        self.start <= now && now < self.stop
    }

    /// Emission instants for rate-driven attacks: `start + k / rate`.
    pub fn emission_times(&self) -> Vec<SimTime> {
        let rate = match self.kind {
            AttackKind::Flooding { rreq_rate } => rreq_rate,
            AttackKind::SleepDeprivation { rate, .. } => rate,
            _ => return Vec::new(),
        };
        (0u64..)
            .map(|k| self.start + k as f64 / rate)
            .take_while(|t| *t < self.stop)
            .collect()
    }

    /// Time of emission `k`, if still inside the window.
    pub fn emission(&self, k: u64) -> Option<SimTime> {
        let rate = match self.kind {
            AttackKind::Flooding { rreq_rate } => rreq_rate,
            AttackKind::SleepDeprivation { rate, .. } => rate,
            _ => return None,
        };
        let t = self.start + k as f64 / rate;
        (t < self.stop).then_some(t)
    }
}

/// Installed schedules, at most one active attack per node at any time.
#[derive(Debug, Clone, Default)]
pub struct AttackTable {
    node_count: usize,
    by_node: BTreeMap<NodeId, Vec<AttackSchedule>>,
}

impl AttackTable {
    pub fn new(node_count: usize) -> Self {
        AttackTable {
            node_count,
            by_node: BTreeMap::new(),
        }
    }

    pub fn install(&mut self, s: AttackSchedule) -> Result<()> {
        if s.node.index() >= self.node_count {
            return Err(Error::UnknownNode(s.node));
        }
        if let AttackKind::SleepDeprivation { victim, .. } = s.kind {
            if victim.index() >= self.node_count {
                return Err(Error::UnknownNode(victim));
            }
        }
        if !(s.start < s.stop) {
            return Err(Error::InvalidAttack {
                node: s.node,
                reason: format!("start {} not before stop {}", s.start, s.stop),
            });
        }
        s.kind.validate(s.node)?;
        let list = self.by_node.entry(s.node).or_default();
        if list.iter().any(|o| s.start < o.stop && o.start < s.stop) {
            return Err(Error::OverlappingAttack(s.node));
        }
        list.push(s);
        Ok(())
    }

    pub fn schedules(&self) -> impl Iterator<Item = &AttackSchedule> {
        self.by_node.values().flatten()
    }

    pub fn active(&self, node: NodeId, now: SimTime) -> Option<&AttackSchedule> {
        self.by_node.get(&node)?.iter().find(|s| s.is_active(now))
    }

    pub fn attackers(&self) -> Vec<NodeId> {
        self.by_node.keys().copied().collect()
    }

    pub fn is_attacker(&self, node: NodeId) -> bool {
        self.by_node.contains_key(&node)
    }
}

/// The reply a blackhole sends for an overheard request: a huge sequence
/// number and a one-hop claim.
pub fn forge_rrep(rreq: &RouteRequest, own_known: Option<u32>) -> RouteReply {
    let best = rreq
        .origin_seq
        .max(rreq.dst_seq.unwrap_or(0))
        .max(own_known.unwrap_or(0));
    RouteReply {
        origin: rreq.origin(),
        target: rreq.target,
        target_seq: best.saturating_add(FORGED_SEQ_BOOST),
        hop_count: 1,
    }
}

/// Whether a packet-dropping attacker discards this transit packet.
pub fn drops<R: Rng + ?Sized>(drop_prob: f64, rng: &mut R) -> bool {
    if drop_prob >= 1.0 {
        return true;
    }
    if drop_prob <= 0.0 {
        return false;
    }
    rng.random::<f64>() < drop_prob
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::RngStream;
    use crate::routing::RreqId;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn sched(node: u32, kind: AttackKind, a: f64, b: f64) -> AttackSchedule {
        AttackSchedule {
            node: n(node),
            kind,
            start: t(a),
            stop: t(b),
        }
    }

    #[test]
    fn windowing() {
        let s = sched(3, AttackKind::Blackhole, 100.0, 200.0);
        assert!(!s.is_active(t(99.9)));
        assert!(s.is_active(t(100.0)));
        assert!(!s.is_active(t(200.0)));
    }

    #[test]
    fn overlapping_install_rejected() {
        let mut tab = AttackTable::new(10);
        tab.install(sched(3, AttackKind::Blackhole, 100.0, 200.0)).unwrap();
        assert_eq!(
            tab.install(sched(3, AttackKind::PacketDrop { drop_prob: 1.0 }, 150.0, 250.0)),
            Err(Error::OverlappingAttack(n(3)))
        );
        tab.install(sched(3, AttackKind::PacketDrop { drop_prob: 1.0 }, 200.0, 250.0))
            .unwrap();
    }

    #[test]
    fn unknown_node_rejected() {
        let mut tab = AttackTable::new(10);
        assert_eq!(
            tab.install(sched(42, AttackKind::Blackhole, 0.0, 1.0)),
            Err(Error::UnknownNode(n(42)))
        );
    }

    #[test]
    fn flood_rate_times_duration() {
        let s = sched(1, AttackKind::Flooding { rreq_rate: 50.0 }, 0.0, 10.0);
        let times = s.emission_times();
        assert_eq!(times.len(), 500);
        assert!(times.last().unwrap() < &t(10.0));
        assert_eq!(s.emission(500), None);
    }

    #[test]
    fn sleep_deprivation_thirty_per_second() {
        let s = sched(
            1,
            AttackKind::SleepDeprivation {
                victim: n(2),
                rate: 30.0,
            },
            0.0,
            10.0,
        );
        assert_eq!(s.emission_times().len(), 300);
    }

    #[test]
    fn forged_reply_shape() {
        let rreq = RouteRequest {
            id: RreqId {
                origin: n(0),
                counter: 1,
            },
            target: n(9),
            origin_seq: 5,
            dst_seq: None,
            hop_count: 0,
        };
        let r = forge_rrep(&rreq, None);
        assert_eq!(r.target_seq, 1005);
        assert_eq!(r.hop_count, 1);
        assert_eq!(r.target, n(9));
    }

    #[test]
    fn drop_probability_extremes() {
        let mut rng = RngStream::derive(1, "attack.drop");
        assert!((0..20).all(|_| drops(1.0, &mut rng)));
        assert!((0..20).all(|_| !drops(0.0, &mut rng)));
    }

    #[test]
    fn half_drop_within_binomial_interval() {
        let mut rng = RngStream::derive(7, "attack.drop.3");
        let forwarded = (0..1000).filter(|_| !drops(0.5, &mut rng)).count();
        assert!((459..=541).contains(&forwarded), "{forwarded}");
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut tab = AttackTable::new(10);
        assert!(matches!(
            tab.install(sched(1, AttackKind::PacketDrop { drop_prob: 1.5 }, 0.0, 1.0)),
            Err(Error::InvalidAttack { .. })
        ));
        assert!(matches!(
            tab.install(sched(1, AttackKind::Blackhole, 5.0, 5.0)),
            Err(Error::InvalidAttack { .. })
        ));
    }
}

//! Node placement, random-waypoint mobility and a unit-disk radio.
//!
//! Propagation is a disk: a frame reaches every node within `range` meters of
//! the transmitter when the frame goes on air, after `8 * size / rate`
//! seconds. Transmissions from one node are serialized through a FIFO queue.
//! There is no contention model; an optional per-delivery loss probability
//! stands in for collisions.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernel::{RngStream, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Area {
    pub width: f64,
    pub height: f64,
}

impl Area {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn random_point<R: Rng>(&self, rng: &mut R) -> Position {
        Position::new(
            rng.random::<f64>() * self.width,
            rng.random::<f64>() * self.height,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MobilityModel {
    Static,
    RandomWaypoint {
        speed_min: f64,
        speed_max: f64,
        pause: f64,
    },
}

impl MobilityModel {
    pub fn mean_speed(&self) -> f64 {
        match *self {
            MobilityModel::Static => 0.0,
            MobilityModel::RandomWaypoint {
                speed_min,
                speed_max,
                ..
            } => 0.5 * (speed_min + speed_max),
        }
    }
}

/// One leg of a random-waypoint trajectory: travel from `origin` to
/// `destination` starting at `depart`, then hold still until `pause_until`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointState {
    pub origin: Position,
    pub depart: SimTime,
    pub destination: Position,
    pub speed: f64,
    pub pause_until: SimTime,
}

impl WaypointState {
    pub fn arrival(&self) -> SimTime {
        if self.speed <= 0.0 {
            return self.depart;
        }
        self.depart + self.origin.distance(&self.destination) / self.speed
    }

    fn position_at(&self, t: SimTime) -> Position {
        let arrive = self.arrival();
        if t >= arrive || self.speed <= 0.0 {
            return self.destination;
        }
        let frac = (t - self.depart) / (arrive - self.depart);
        Position::new(
            self.origin.x + (self.destination.x - self.origin.x) * frac,
            self.origin.y + (self.destination.y - self.origin.y) * frac,
        )
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Track {
    Fixed(Position),
    Waypoint { leg: WaypointState, rng: RngStream },
}

/// Positions of every node as a function of time. Legs are drawn lazily from
/// a per-node random stream, so queries must not go back past the current leg.
#[derive(Debug, Clone)]
pub struct Mobility {
    area: Area,
    model: MobilityModel,
    tracks: Vec<Track>,
}

impl Mobility {
    /// Nodes start at `initial` and immediately head to their first waypoint.
    /// `streams[i]` drives node `i`.
    pub fn new(
        area: Area,
        model: MobilityModel,
        initial: Vec<Position>,
        streams: Vec<RngStream>,
    ) -> Self {
        assert_eq!(initial.len(), streams.len());
        let tracks = initial
            .into_iter()
            .zip(streams)
            .map(|(p, mut rng)| match model {
                MobilityModel::Static => Track::Fixed(p),
                MobilityModel::RandomWaypoint {
                    speed_min,
                    speed_max,
                    pause,
                } => {
                    let leg = draw_leg(&area, speed_min, speed_max, p, SimTime::ZERO, pause, &mut rng);
                    Track::Waypoint { leg, rng }
                }
            })
            .collect();
        Mobility {
            area,
            model,
            tracks,
        }
    }

    /// Builds a single waypoint track from an explicit leg. Used for scripted
    /// scenarios and tests.
    pub fn scripted(area: Area, model: MobilityModel, legs: Vec<(WaypointState, RngStream)>) -> Self {
        Mobility {
            area,
            model,
            tracks: legs
                .into_iter()
                .map(|(leg, rng)| Track::Waypoint { leg, rng })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn model(&self) -> MobilityModel {
        self.model
    }

    pub fn area(&self) -> Area {
        self.area
    }

    pub fn position_at(&mut self, node: NodeId, t: SimTime) -> Result<Position> {
        let area = self.area;
        let model = self.model;
        let track = self
            .tracks
            .get_mut(node.index())
            .ok_or(Error::UnknownNode(node))?;
        match track {
            Track::Fixed(p) => Ok(*p),
            Track::Waypoint { leg, rng } => {
                if t < leg.depart {
                    return Err(Error::TimeRewind {
                        node,
                        at: t,
                        last: leg.depart,
                    });
                }
                let (speed_min, speed_max, pause) = match model {
                    MobilityModel::RandomWaypoint {
                        speed_min,
                        speed_max,
                        pause,
                    } => (speed_min, speed_max, pause),
                    MobilityModel::Static => (0.0, 0.0, 0.0),
                };
                while t >= leg.pause_until && speed_max > 0.0 {
                    *leg = draw_leg(
                        &area,
                        speed_min,
                        speed_max,
                        leg.destination,
                        leg.pause_until,
                        pause,
                        rng,
                    );
                }
                Ok(leg.position_at(t))
            }
        }
    }

    pub fn positions_at(&mut self, t: SimTime) -> Vec<Position> {
        (0..self.tracks.len())
            .map(|i| {
                self.position_at(NodeId(i as u32), t)
                    .expect("simulation time only moves forward")
            })
            .collect()
    }

    pub fn current_leg(&self, node: NodeId) -> Option<WaypointState> {
        match self.tracks.get(node.index())? {
            Track::Waypoint { leg, .. } => Some(*leg),
            Track::Fixed(_) => None,
        }
    }
}

fn draw_leg(
    area: &Area,
    speed_min: f64,
    speed_max: f64,
    origin: Position,
    depart: SimTime,
    pause: f64,
    rng: &mut RngStream,
) -> WaypointState {
    let destination = area.random_point(rng);
    let speed = if speed_max > speed_min {
        rng.random_range(speed_min..=speed_max)
    } else {
        speed_max
    };
    let mut leg = WaypointState {
        origin,
        depart,
        destination,
        speed,
        pause_until: depart,
    };
    leg.pause_until = leg.arrival() + pause;
    leg
}

/// Sorted ids of every other node within `range` (inclusive).
pub fn neighbors_in(positions: &[Position], node: NodeId, range: f64) -> Vec<NodeId> {
    let me = positions[node.index()];
    positions
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != node.index() && me.distance(p) <= range)
        .map(|(i, _)| NodeId(i as u32))
        .collect()
}

/// Hop distance over the unit-disk graph, `None` when unreachable.
pub fn hop_distance(positions: &[Position], from: NodeId, to: NodeId, range: f64) -> Option<u32> {
    if from == to {
        return Some(0);
    }
    let n = positions.len();
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[from.index()] = 0;
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        for v in neighbors_in(positions, u, range) {
            if dist[v.index()] == u32::MAX {
                dist[v.index()] = dist[u.index()] + 1;
                if v == to {
                    return Some(dist[v.index()]);
                }
                queue.push_back(v);
            }
        }
    }
    None
}

pub fn airtime(size_bytes: u32, channel_bps: f64) -> f64 {
    8.0 * size_bytes as f64 / channel_bps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Unicast(NodeId),
    Broadcast,
}

#[derive(Debug, Clone)]
pub struct Frame<P> {
    pub src: NodeId,
    pub dst: Dest,
    pub size: u32,
    pub payload: P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    /// Addressed to this node (or broadcast).
    Received,
    /// Unicast for someone else, picked up in promiscuous mode.
    Overheard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConfig {
    pub range: f64,
    pub channel_bps: f64,
    pub loss_prob: f64,
    pub queue_capacity: usize,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            range: 250.0,
            channel_bps: 2e6,
            loss_prob: 0.0,
            queue_capacity: 50,
        }
    }
}

/// A frame on air: who will get it and when.
#[derive(Debug, Clone)]
pub struct TxPlan<P> {
    pub node: NodeId,
    pub frame: Frame<P>,
    pub start: SimTime,
    pub end: SimTime,
    pub deliveries: Vec<(NodeId, Reception)>,
    /// Unicast destination was out of range when the frame went on air.
    pub link_failed: bool,
}

#[derive(Debug)]
pub enum Enqueued<P> {
    Started(TxPlan<P>),
    Queued,
    Dropped(Frame<P>),
}

/// Mobility plus per-node transmit queues.
pub struct NetModel<P> {
    pub mobility: Mobility,
    pub radio: RadioConfig,
    queues: Vec<VecDeque<Frame<P>>>,
    busy: Vec<bool>,
    loss_rng: RngStream,
    cached: Option<(SimTime, Vec<Position>)>,
}

impl<P> NetModel<P> {
    pub fn new(mobility: Mobility, radio: RadioConfig, loss_rng: RngStream) -> Self {
        let n = mobility.len();
        NetModel {
            mobility,
            radio,
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            busy: vec![false; n],
            loss_rng,
            cached: None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.busy.len()
    }

    pub fn positions(&mut self, t: SimTime) -> &[Position] {
        let stale = !matches!(&self.cached, Some((ct, _)) if *ct == t);
        if stale {
            let ps = self.mobility.positions_at(t);
            self.cached = Some((t, ps));
        }
        &self.cached.as_ref().unwrap().1
    }

    pub fn position_at(&mut self, node: NodeId, t: SimTime) -> Result<Position> {
        if node.index() >= self.node_count() {
            return Err(Error::UnknownNode(node));
        }
        Ok(self.positions(t)[node.index()])
    }

    pub fn neighbors(&mut self, node: NodeId, t: SimTime) -> Vec<NodeId> {
        let range = self.radio.range;
        neighbors_in(self.positions(t), node, range)
    }

    pub fn hop_distance(&mut self, from: NodeId, to: NodeId, t: SimTime) -> Option<u32> {
        let range = self.radio.range;
        hop_distance(self.positions(t), from, to, range)
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.queues[node.index()].len()
    }

    /// Queues `frame` behind any frame already on air from `node`.
    pub fn enqueue(&mut self, node: NodeId, frame: Frame<P>, now: SimTime) -> Enqueued<P> {
        let i = node.index();
        if self.busy[i] {
            if self.queues[i].len() >= self.radio.queue_capacity {
                return Enqueued::Dropped(frame);
            }
            self.queues[i].push_back(frame);
            return Enqueued::Queued;
        }
        Enqueued::Started(self.start(node, frame, now))
    }

    /// Marks the frame on air from `node` as done and starts the next one.
    pub fn complete(&mut self, node: NodeId, now: SimTime) -> Option<TxPlan<P>> {
        let i = node.index();
        self.busy[i] = false;
        let next = self.queues[i].pop_front()?;
        Some(self.start(node, next, now))
    }

    fn start(&mut self, node: NodeId, frame: Frame<P>, now: SimTime) -> TxPlan<P> {
        self.busy[node.index()] = true;
        let in_range = self.neighbors(node, now);
        let loss = self.radio.loss_prob;
        let mut deliveries = Vec::with_capacity(in_range.len());
        for n in &in_range {
            if loss > 0.0 && self.loss_rng.random::<f64>() < loss {
                continue;
            }
            let kind = match frame.dst {
                Dest::Broadcast => Reception::Received,
                Dest::Unicast(d) if d == *n => Reception::Received,
                Dest::Unicast(_) => Reception::Overheard,
            };
            deliveries.push((*n, kind));
        }
        let link_failed = match frame.dst {
            Dest::Unicast(d) => !in_range.contains(&d),
            Dest::Broadcast => false,
        };
        let end = now + airtime(frame.size, self.radio.channel_bps);
        TxPlan {
            node,
            frame,
            start: now,
            end,
            deliveries,
            link_failed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn area() -> Area {
        Area {
            width: 500.0,
            height: 500.0,
        }
    }

    fn rwp() -> MobilityModel {
        MobilityModel::RandomWaypoint {
            speed_min: 1.0,
            speed_max: 5.0,
            pause: 5.0,
        }
    }

    fn fixed(points: &[(f64, f64)]) -> NetModel<&'static str> {
        let initial: Vec<_> = points.iter().map(|&(x, y)| Position::new(x, y)).collect();
        let streams = (0..initial.len())
            .map(|i| RngStream::derive(1, &format!("m{i}")))
            .collect();
        let m = Mobility::new(area(), MobilityModel::Static, initial, streams);
        NetModel::new(m, RadioConfig::default(), RngStream::derive(1, "channel"))
    }

    #[test]
    fn linear_motion_along_leg() {
        let leg = WaypointState {
            origin: Position::new(0.0, 0.0),
            depart: t(0.0),
            destination: Position::new(100.0, 0.0),
            speed: 10.0,
            pause_until: t(15.0),
        };
        let mut m = Mobility::scripted(area(), rwp(), vec![(leg, RngStream::derive(0, "x"))]);
        assert_eq!(m.position_at(NodeId(0), t(5.0)).unwrap(), Position::new(50.0, 0.0));
    }

    #[test]
    fn pause_holds_position_after_arrival() {
        let leg = WaypointState {
            origin: Position::new(0.0, 0.0),
            depart: t(0.0),
            destination: Position::new(100.0, 0.0),
            speed: 10.0,
            pause_until: t(15.0),
        };
        let mut m = Mobility::scripted(area(), rwp(), vec![(leg, RngStream::derive(0, "x"))]);
        for s in [10.0, 12.5, 14.999] {
            assert_eq!(m.position_at(NodeId(0), t(s)).unwrap(), Position::new(100.0, 0.0));
        }
        let after = m.position_at(NodeId(0), t(16.0)).unwrap();
        assert_ne!(after, Position::new(100.0, 0.0));
    }

    #[test]
    fn waypoint_pause_is_applied_between_legs() {
        let initial = vec![Position::new(250.0, 250.0)];
        let m = Mobility::new(area(), rwp(), initial, vec![RngStream::derive(4, "m0")]);
        let leg = m.current_leg(NodeId(0)).unwrap();
        let arrive = leg.arrival();
        assert!((leg.pause_until - arrive - 5.0).abs() < 1e-9);
        assert!((1.0..=5.0).contains(&leg.speed));
    }

    #[test]
    fn static_nodes_never_move() {
        let mut net = fixed(&[(10.0, 20.0)]);
        for s in [0.0, 50.0, 1000.0] {
            assert_eq!(net.position_at(NodeId(0), t(s)).unwrap(), Position::new(10.0, 20.0));
        }
    }

    #[test]
    fn unknown_node_is_an_error() {
        let mut net = fixed(&[(0.0, 0.0)]);
        assert_eq!(net.position_at(NodeId(3), t(0.0)), Err(Error::UnknownNode(NodeId(3))));
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let mut net = fixed(&[(0.0, 0.0), (250.0, 0.0), (0.0, 250.1)]);
        assert_eq!(net.neighbors(NodeId(0), t(0.0)), vec![NodeId(1)]);
        assert_eq!(net.neighbors(NodeId(1), t(0.0)), vec![NodeId(0)]);
        assert!(net.neighbors(NodeId(2), t(0.0)).is_empty());
    }

    #[test]
    fn airtime_of_512_byte_frame() {
        assert!((airtime(512, 2e6) - 0.002048).abs() < 1e-12);
    }

    #[test]
    fn unicast_is_overheard_by_other_neighbors() {
        let mut net = fixed(&[(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (400.0, 400.0)]);
        let frame = Frame {
            src: NodeId(0),
            dst: Dest::Unicast(NodeId(1)),
            size: 512,
            payload: "data",
        };
        let Enqueued::Started(plan) = net.enqueue(NodeId(0), frame, t(1.0)) else {
            panic!("idle transmitter should start immediately");
        };
        assert_eq!(
            plan.deliveries,
            vec![(NodeId(1), Reception::Received), (NodeId(2), Reception::Overheard)]
        );
        assert!((plan.end - plan.start - 0.002048).abs() < 1e-12);
        assert!(!plan.link_failed);
    }

    #[test]
    fn full_loss_delivers_nothing() {
        let mut net = fixed(&[(0.0, 0.0), (100.0, 0.0)]);
        net.radio.loss_prob = 1.0;
        let mut now = t(0.0);
        for _ in 0..100 {
            let frame = Frame {
                src: NodeId(0),
                dst: Dest::Broadcast,
                size: 64,
                payload: "x",
            };
            let Enqueued::Started(plan) = net.enqueue(NodeId(0), frame, now) else {
                panic!()
            };
            assert!(plan.deliveries.is_empty());
            now = plan.end;
            assert!(net.complete(NodeId(0), now).is_none());
        }
    }

    #[test]
    fn transmissions_serialize_fifo() {
        let mut net = fixed(&[(0.0, 0.0), (100.0, 0.0)]);
        let mk = |p| Frame {
            src: NodeId(0),
            dst: Dest::Broadcast,
            size: 512,
            payload: p,
        };
        let Enqueued::Started(first) = net.enqueue(NodeId(0), mk("a"), t(0.0)) else {
            panic!()
        };
        assert!(matches!(net.enqueue(NodeId(0), mk("b"), t(0.0)), Enqueued::Queued));
        assert!(matches!(net.enqueue(NodeId(0), mk("c"), t(0.0)), Enqueued::Queued));
        let second = net.complete(NodeId(0), first.end).unwrap();
        assert_eq!(second.frame.payload, "b");
        assert!(second.end > first.end);
        let third = net.complete(NodeId(0), second.end).unwrap();
        assert_eq!(third.frame.payload, "c");
        assert!(third.end > second.end);
    }

    #[test]
    fn link_failure_when_destination_out_of_range() {
        let mut net = fixed(&[(0.0, 0.0), (400.0, 0.0)]);
        let frame = Frame {
            src: NodeId(0),
            dst: Dest::Unicast(NodeId(1)),
            size: 64,
            payload: "x",
        };
        let Enqueued::Started(plan) = net.enqueue(NodeId(0), frame, t(0.0)) else {
            panic!()
        };
        assert!(plan.link_failed);
        assert!(plan.deliveries.is_empty());
    }

    #[test]
    fn neighbor_relation_is_symmetric_under_mobility() {
        let initial: Vec<_> = {
            let mut r = RngStream::derive(11, "placement");
            (0..30).map(|_| area().random_point(&mut r)).collect()
        };
        let streams = (0..30).map(|i| RngStream::derive(11, &format!("m{i}"))).collect();
        let m = Mobility::new(area(), rwp(), initial, streams);
        let mut net: NetModel<()> = NetModel::new(m, RadioConfig::default(), RngStream::derive(11, "c"));
        for step in 0..200 {
            let now = t(step as f64 * 1.5);
            let ps = net.positions(now).to_vec();
            for p in &ps {
                assert!(area().contains(p));
            }
            for a in 0..30u32 {
                for b in 0..30u32 {
                    if a == b {
                        continue;
                    }
                    let brute = ps[a as usize].distance(&ps[b as usize]) <= 250.0;
                    let na = net.neighbors(NodeId(a), now).contains(&NodeId(b));
                    let nb = net.neighbors(NodeId(b), now).contains(&NodeId(a));
                    assert_eq!(na, brute);
                    assert_eq!(na, nb);
                }
            }
        }
    }

    #[test]
    fn hop_distance_on_a_line() {
        let ps: Vec<_> = (0..4).map(|i| Position::new(i as f64 * 200.0, 0.0)).collect();
        assert_eq!(hop_distance(&ps, NodeId(0), NodeId(3), 250.0), Some(3));
        assert_eq!(hop_distance(&ps, NodeId(0), NodeId(3), 100.0), None);
    }
}

//! Deterministic discrete-event engine.
//!
//! A single queue ordered by `(fire_at, seq)` drives every simulation
//! instance. `seq` is a per-kernel insertion counter, so events scheduled for
//! the same instant fire in the order they were scheduled.

mod rng;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

pub use rng::{RngStream, RngStreams};

use crate::error::{Error, Result};
use crate::NodeId;

/// Simulated time in seconds. Never negative, totally ordered.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Panics on negative or non-finite input.
    pub fn from_secs(secs: f64) -> Self {
        assert!(
            secs.is_finite() && secs >= 0.0,
            "simulated time must be finite and non-negative, got {secs}"
        );
        SimTime(secs)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// Time elapsed since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> f64 {
        (self.0 - earlier.0).max(0.0)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Global,
    Node(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone)]
pub struct Event<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: Target,
    pub payload: P,
}

struct Queued<P>(Event<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.seq == other.0.seq
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.0.fire_at, self.0.seq).cmp(&(other.0.fire_at, other.0.seq))
    }
}

pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    fired: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            fired: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events fired since construction.
    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn schedule(&mut self, at: SimTime, target: Target, payload: P) -> Result<EventId> {
        if at < self.now {
            return Err(Error::PastEvent { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued(Event {
            fire_at: at,
            seq,
            target,
            payload,
        })));
        Ok(EventId(seq))
    }

    /// Schedules `delay` seconds from now. Negative delays are clamped to zero.
    pub fn schedule_in(&mut self, delay: f64, target: Target, payload: P) -> EventId {
        let at = self.now + delay.max(0.0);
        self.schedule(at, target, payload)
            .expect("relative schedule is never in the past")
    }

    /// Pops the next event due at or before `t_end`, advancing the clock to
    /// its fire time.
    pub fn pop_due(&mut self, t_end: SimTime) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(Reverse(Queued(ev))) if ev.fire_at <= t_end => {}
            _ => return None,
        }
        let Reverse(Queued(ev)) = self.queue.pop()?;
        self.now = ev.fire_at;
        self.fired += 1;
        Some(ev)
    }

    /// Moves the clock forward to `t`. Never moves it backwards.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Fires every event with `fire_at <= t_end`, including ones scheduled by
    /// the handler during this call, then sets the clock to `t_end`.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Kernel<P>, Event<P>),
    {
        if t_end < self.now {
            return 0;
        }
        let mut count = 0;
        while let Some(ev) = self.pop_due(t_end) {
            handler(self, ev);
            count += 1;
        }
        self.advance_to(t_end);
        count
    }
}

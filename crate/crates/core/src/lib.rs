//! Cluster-based intrusion detection for wireless ad hoc networks, with a
//! deterministic discrete-event simulator to drive it.
//!
//! The protocol pieces live in their own modules and are plain state
//! machines: [`clustering`] (passive clustering, gateways), [`trust`] (trust
//! bookkeeping and head elections), [`agents`] (mobile-agent lifecycle),
//! [`detection`] (audit records, signatures, anomaly thresholds, watchdog,
//! cooperative verdicts) and [`response`] (local, cluster and network-wide
//! isolation). [`world::Simulation`] wires them onto the [`net`] radio model
//! and the [`routing`] layer, with [`attacks`] injecting ground-truth
//! misbehavior. [`harness`] loads scenarios, runs them and scores the alert
//! stream against ground truth.
//!
//! ```no_run
//! use manet_ids::harness::{self, ScenarioConfig};
//!
//! let cfg = ScenarioConfig::default();
//! let out = harness::run(&cfg, 7)?;
//! println!("{:?}", out.report);
//! # Ok::<(), manet_ids::Error>(())
//! ```

pub mod agents;
pub mod attacks;
pub mod clustering;
pub mod detection;
mod error;
pub mod harness;
pub mod kernel;
pub mod net;
pub mod response;
pub mod routing;
pub mod trust;
pub mod world;

use std::fmt;

pub use error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

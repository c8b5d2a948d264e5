use thiserror::Error;

use crate::kernel::SimTime;
use crate::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("past event: cannot schedule at {at} when clock is {now}")]
    PastEvent { at: SimTime, now: SimTime },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("position query for node {node} at {at} precedes its last update {last}")]
    TimeRewind {
        node: NodeId,
        at: SimTime,
        last: SimTime,
    },

    #[error("negative severity {0}")]
    NegativeSeverity(f64),

    #[error("empty itinerary")]
    EmptyItinerary,

    #[error("itinerary node {0} is not a registered member")]
    UnregisteredItineraryNode(NodeId),

    #[error("node {0} is not a cluster head")]
    NotHead(NodeId),

    #[error("node {0} cannot block itself")]
    SelfBlock(NodeId),

    #[error("overlapping attack schedule on node {0}")]
    OverlappingAttack(NodeId),

    #[error("invalid attack schedule on node {node}: {reason}")]
    InvalidAttack { node: NodeId, reason: String },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("trace does not match config: {0}")]
    TraceMismatch(String),

    #[error("batch needs at least one seed")]
    NoSeeds,

    #[error("io error on {path}: {reason}")]
    Io { path: String, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }
}

//! Frame payloads and their wire sizes.

use crate::agents::{AgentConfig, MobileAgent};
use crate::clustering::{Advert, Beacon, PiggybackTag, TwoHop, TAG_BYTES};
use crate::detection::{Alert, MisuseSignature, Suspicion};
use crate::response::ResponseAction;
use crate::routing::{Packet, RouteReply, RouteRequest};
use crate::trust::{Ballot, TrustScore};
use crate::NodeId;

pub const RREQ_BYTES: u32 = 48;
pub const RREP_BYTES: u32 = 44;
pub const RERR_BYTES: u32 = 32;
pub const SHORT_BYTES: u32 = 16;
pub const REPORT_BYTES: u32 = 48;
pub const ISOLATE_BYTES: u32 = 24;

/// Control-overhead class of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Class {
    Payload,
    Routing,
    Beacon,
    Cluster,
    Election,
    Report,
    Agent,
    Response,
    Learn,
}

impl Class {
    pub const CONTROL: [Class; 7] = [
        Class::Beacon,
        Class::Cluster,
        Class::Election,
        Class::Report,
        Class::Agent,
        Class::Response,
        Class::Learn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Class::Payload => "payload",
            Class::Routing => "routing",
            Class::Beacon => "beacon",
            Class::Cluster => "cluster",
            Class::Election => "election",
            Class::Report => "report",
            Class::Agent => "agent",
            Class::Response => "response",
            Class::Learn => "learn",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub id: u64,
    pub alert: Alert,
}

#[derive(Debug, Clone)]
pub struct Handover {
    pub epoch: u64,
    pub old_head: NodeId,
    pub registry: Vec<(NodeId, crate::kernel::SimTime)>,
    pub trust: Vec<(NodeId, TrustScore)>,
    pub neighbor_heads: Vec<NodeId>,
    pub signatures: Vec<MisuseSignature>,
    pub base_version: u64,
}

/// Payloads carried end-to-end by the routing layer.
#[derive(Debug, Clone)]
pub enum Body {
    Cbr { flow: usize },
    Bogus,
    Agent(Box<MobileAgent>),
    Report(Box<Report>),
    ReportAck { id: u64 },
    CoopRequest(Box<Suspicion>),
    Ballot(Ballot),
    Handover(Box<Handover>),
    HandoverAck { epoch: u64 },
    NetIsolate { action: ResponseAction, round: u32 },
}

impl Body {
    pub fn name(&self) -> &'static str {
        match self {
            Body::Cbr { .. } => "cbr",
            Body::Bogus => "bogus",
            Body::Agent(_) => "agent",
            Body::Report(_) => "report",
            Body::ReportAck { .. } => "report_ack",
            Body::CoopRequest(_) => "coop_request",
            Body::Ballot(_) => "ballot",
            Body::Handover(_) => "handover",
            Body::HandoverAck { .. } => "handover_ack",
            Body::NetIsolate { .. } => "net_isolate",
        }
    }

    /// Data traffic that attackers drop and watchdogs follow.
    pub fn is_payload(&self) -> bool {
        matches!(self, Body::Cbr { .. } | Body::Bogus)
    }

    pub fn class(&self) -> Class {
        match self {
            Body::Cbr { .. } | Body::Bogus => Class::Payload,
            Body::Agent(_) => Class::Agent,
            Body::Report(_) | Body::ReportAck { .. } | Body::CoopRequest(_) => Class::Report,
            Body::Ballot(_) | Body::Handover(_) | Body::HandoverAck { .. } => Class::Election,
            Body::NetIsolate { .. } => Class::Response,
        }
    }

    pub fn size(&self, pkt_size: u32, agents: &AgentConfig) -> u32 {
        match self {
            Body::Cbr { .. } | Body::Bogus => pkt_size,
            Body::Agent(a) => a.wire_size(agents),
            Body::Report(_) | Body::CoopRequest(_) => REPORT_BYTES,
            Body::ReportAck { .. } | Body::Ballot(_) | Body::HandoverAck { .. } => SHORT_BYTES,
            Body::Handover(h) => {
                32 + 8 * h.registry.len() as u32
                    + 12 * h.trust.len() as u32
                    + 4 * h.neighbor_heads.len() as u32
                    + h.signatures.iter().map(MisuseSignature::wire_size).sum::<u32>()
            }
            Body::NetIsolate { .. } => ISOLATE_BYTES,
        }
    }
}

/// Cluster control flooded over a bounded number of hops.
#[derive(Debug, Clone)]
pub enum ClusterMsg {
    Beacon(Beacon),
    ElectionCall { epoch: u64, candidates: Vec<NodeId> },
    HeadChange { old: NodeId, new: NodeId },
    Isolate(ResponseAction),
    BaseDelta { sigs: Vec<MisuseSignature>, version: u64 },
}

impl ClusterMsg {
    pub fn name(&self) -> &'static str {
        match self {
            ClusterMsg::Beacon(_) => "beacon",
            ClusterMsg::ElectionCall { .. } => "election_call",
            ClusterMsg::HeadChange { .. } => "head_change",
            ClusterMsg::Isolate(_) => "isolate",
            ClusterMsg::BaseDelta { .. } => "base_delta",
        }
    }

    pub fn class(&self) -> Class {
        match self {
            ClusterMsg::Beacon(_) => Class::Beacon,
            ClusterMsg::ElectionCall { .. } | ClusterMsg::HeadChange { .. } => Class::Election,
            ClusterMsg::Isolate(_) => Class::Response,
            ClusterMsg::BaseDelta { .. } => Class::Learn,
        }
    }

    pub fn size(&self) -> u32 {
        match self {
            ClusterMsg::Beacon(b) => {
                let lists = b.member_ids.len()
                    + b.gateway_ids.len()
                    + b.distributed_gateway_ids.len()
                    + b.isolated.len();
                16 + 4 * lists as u32
            }
            ClusterMsg::ElectionCall { candidates, .. } => SHORT_BYTES + 4 * candidates.len() as u32,
            ClusterMsg::HeadChange { .. } => SHORT_BYTES,
            ClusterMsg::Isolate(_) => ISOLATE_BYTES,
            ClusterMsg::BaseDelta { sigs, .. } => {
                SHORT_BYTES + sigs.iter().map(MisuseSignature::wire_size).sum::<u32>()
            }
        }
    }
}

/// Source-routed cluster control between a member and its head.
#[derive(Debug, Clone)]
pub enum PathMsg {
    Advert(Advert),
    Register { hops: u8 },
    RegisterAck { sigs: Vec<MisuseSignature>, version: u64 },
}

impl PathMsg {
    pub fn name(&self) -> &'static str {
        match self {
            PathMsg::Advert(_) => "advert",
            PathMsg::Register { .. } => "register",
            PathMsg::RegisterAck { .. } => "register_ack",
        }
    }

    pub fn class(&self) -> Class {
        match self {
            PathMsg::RegisterAck { sigs, .. } if !sigs.is_empty() => Class::Learn,
            _ => Class::Cluster,
        }
    }

    pub fn size(&self) -> u32 {
        match self {
            PathMsg::Advert(a) => {
                16 + 4 * (a.heads_1hop.len() + 2 * a.heads_2hop.len() + a.neighbors.len()) as u32
            }
            PathMsg::Register { .. } => SHORT_BYTES,
            PathMsg::RegisterAck { sigs, .. } => {
                SHORT_BYTES + sigs.iter().map(MisuseSignature::wire_size).sum::<u32>()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Msg {
    Rreq(RouteRequest),
    Rrep(RouteReply),
    Rerr(Vec<NodeId>),
    Data { packet: Packet<Body>, tag: PiggybackTag },
    Cluster(TwoHop<ClusterMsg>),
    /// `route[idx]` is the receiver of this copy; the last entry is the
    /// destination.
    Path { route: Vec<NodeId>, idx: usize, body: PathMsg },
}

impl Msg {
    pub fn name(&self) -> &'static str {
        match self {
            Msg::Rreq(_) => "rreq",
            Msg::Rrep(_) => "rrep",
            Msg::Rerr(_) => "rerr",
            Msg::Data { packet, .. } => packet.body.name(),
            Msg::Cluster(c) => c.body.name(),
            Msg::Path { body, .. } => body.name(),
        }
    }

    pub fn class(&self) -> Class {
        match self {
            Msg::Rreq(_) | Msg::Rrep(_) | Msg::Rerr(_) => Class::Routing,
            Msg::Data { packet, .. } => packet.body.class(),
            Msg::Cluster(c) => c.body.class(),
            Msg::Path { body, .. } => body.class(),
        }
    }

    /// Bytes on air.
    pub fn size(&self) -> u32 {
        match self {
            Msg::Rreq(_) => RREQ_BYTES,
            Msg::Rrep(_) => RREP_BYTES,
            Msg::Rerr(d) => RERR_BYTES + 4 * d.len() as u32,
            Msg::Data { packet, .. } => packet.size + TAG_BYTES,
            Msg::Cluster(c) => c.body.size(),
            Msg::Path { body, .. } => body.size(),
        }
    }

    /// Bytes counted as IDS control overhead, excluding the tag.
    pub fn control_bytes(&self) -> u32 {
        match self.class() {
            Class::Payload | Class::Routing => 0,
            _ => match self {
                Msg::Data { packet, .. } => packet.size,
                other => other.size(),
            },
        }
    }

    pub fn tag_bytes(&self) -> u32 {
        match self {
            Msg::Data { .. } => TAG_BYTES,
            _ => 0,
        }
    }

    /// Node the message claims to come from, for blocklist checks.
    pub fn origin(&self) -> Option<NodeId> {
        match self {
            Msg::Rreq(r) => Some(r.origin()),
            Msg::Rrep(_) | Msg::Rerr(_) => None,
            Msg::Data { packet, .. } => Some(packet.origin),
            Msg::Cluster(c) => Some(c.origin),
            Msg::Path { route, .. } => route.first().copied(),
        }
    }
}

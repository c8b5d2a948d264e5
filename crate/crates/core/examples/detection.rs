//! The blackhole signature against a forged reply, and anomaly bands of the
//! default rules.

use manet_ids::attacks::forge_rrep;
use manet_ids::detection::{AnomalyRule, DetectionConfig, Detector};
use manet_ids::kernel::SimTime;
use manet_ids::routing::{RouteRequest, RreqId};
use manet_ids::NodeId;

fn main() {
    let req = RouteRequest {
        id: RreqId {
            origin: NodeId(1),
            counter: 1,
        },
        target: NodeId(4),
        origin_seq: 5,
        dst_seq: Some(5),
        hop_count: 0,
    };
    let mut d = Detector::new(NodeId(2), DetectionConfig::default());
    d.on_rreq_seen(SimTime::from_secs(1.0), NodeId(1), &req);
    let forged = forge_rrep(&req, None);
    println!("forged reply: seq {} hops {}", forged.target_seq, forged.hop_count);
    match d.on_rrep_seen(SimTime::from_secs(1.01), NodeId(7), &forged) {
        Some(a) => println!("alert: {} names {} ({:?})", a.source, a.suspect, a.label),
        None => println!("no alert"),
    }

    for rule in AnomalyRule::defaults() {
        let probes = [0.1, 0.4, 1.0, 7.0, 15.0, 25.0];
        let bands: Vec<String> = probes.iter().map(|v| format!("{v}:{:?}", rule.classify(*v))).collect();
        println!("{} {}", rule.rule_id, bands.join(" "));
    }
}

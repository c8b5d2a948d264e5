//! Local blocking and the head's escalation from cluster to network
//! isolation.

use manet_ids::kernel::SimTime;
use manet_ids::response::{enforce, Blocklist, Evidence, ResponseConfig, ResponsePolicy};
use manet_ids::NodeId;

fn main() -> manet_ids::Result<()> {
    let now = SimTime::from_secs(50.0);
    let mut list = Blocklist::new(NodeId(0), None);
    println!("first block: {}", list.block(NodeId(5), now)?);
    println!("again: {}", list.block(NodeId(5), now)?);
    println!("frame from 5: {:?}", enforce(&list, NodeId(5), None, now));
    println!("frame from 6: {:?}", enforce(&list, NodeId(6), None, now));

    let mut policy = ResponsePolicy::new(ResponseConfig::default());
    for (reporter, ev) in [(1, Evidence::Anomaly), (2, Evidence::Anomaly), (3, Evidence::Misuse), (4, Evidence::Misuse)] {
        let e = policy.on_evidence(NodeId(5), NodeId(reporter), ev);
        println!("{ev:?} from {reporter}: cluster {} network {}", e.cluster, e.network);
    }
    Ok(())
}

//! An agent walks its itinerary and returns; another times out twice and is
//! re-dispatched before the request is given up.

use manet_ids::agents::{AgentConfig, AgentQuery, AgentRegistry, Observation, TimeoutOutcome};
use manet_ids::detection::Metric;
use manet_ids::kernel::SimTime;
use manet_ids::NodeId;

fn main() -> manet_ids::Result<()> {
    let t = SimTime::from_secs;
    let head = NodeId(0);
    let members = [NodeId(1), NodeId(2), NodeId(3)];
    let query = AgentQuery {
        metric: Metric::ForwardRatio,
        suspect: NodeId(9),
        window: (t(100.0), t(110.0)),
    };
    let mut reg = AgentRegistry::new(AgentConfig::default());

    let mut a = reg.create_agent(head, 1, query, vec![NodeId(1), NodeId(2)], &members, t(110.0))?;
    while !a.is_done() {
        let at = a.next_stop();
        a.execute_at(at, Observation::Value(0.4));
        println!("agent {} visited {at}", a.id);
    }
    println!("returned with {:?}", reg.on_return(&a));

    let b = reg.create_agent(head, 2, query, vec![NodeId(3)], &members, t(120.0))?;
    let mut id = b.id;
    loop {
        let deadline = reg.entry(id).expect("registered").deadline;
        match reg.on_timeout(id, head, deadline) {
            TimeoutOutcome::Redispatch(next) => {
                println!("agent {id} lost, re-dispatched as {}", next.id);
                id = next.id;
            }
            TimeoutOutcome::Exhausted { request, .. } => {
                println!("request {request} exhausted after {} dispatches", reg.dispatched_for(request));
                break;
            }
            TimeoutOutcome::Ignored => break,
        }
    }
    Ok(())
}

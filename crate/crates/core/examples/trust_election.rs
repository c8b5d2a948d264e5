//! Trust penalties and recovery, then a trust-weighted election.

use std::collections::BTreeMap;

use manet_ids::kernel::SimTime;
use manet_ids::trust::{cast_vote, election_period, tally, TrustParams, TrustTable};
use manet_ids::NodeId;

fn main() -> manet_ids::Result<()> {
    let t = SimTime::from_secs;
    let mut table = TrustTable::new(TrustParams::default());
    let candidates = [NodeId(1), NodeId(2), NodeId(3)];
    for c in candidates {
        table.ensure(c, t(0.0));
    }
    println!("node 2 after penalty: {:.3}", table.penalize(NodeId(2), 1.0, t(10.0))?);
    println!("node 2 at 40 s: {:.3}", table.value(NodeId(2), t(40.0)));
    for _ in 0..20 {
        table.penalize(NodeId(3), 0.0, t(40.0))?;
    }
    table.recover(NodeId(1), t(100.0));

    let ballots: Vec<_> = (10..15)
        .filter_map(|v| cast_vote(NodeId(v), &mut table, &candidates, 1, t(100.0)))
        .collect();
    let connectivity = BTreeMap::from([(NodeId(1), 4), (NodeId(3), 6)]);
    let result = tally(&ballots, &connectivity).expect("someone voted");
    println!(
        "winner {} with {:?}, tie broken by {}",
        result.winner,
        result.vote_counts,
        result.tie_broken_by.as_str()
    );
    println!("election period at 10 m/s: {:.1} s", election_period(100.0, 10.0));
    Ok(())
}

//! Heads declared by traffic, members joining within two hops, and the
//! distributed gateway pair between heads three hops apart.

use manet_ids::harness::ScenarioConfig;
use manet_ids::world::Simulation;

fn main() -> manet_ids::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.node_count = 4;
    cfg.area_width = 800.0;
    cfg.positions = vec![[50.0, 50.0], [250.0, 50.0], [450.0, 50.0], [650.0, 50.0]];
    cfg.mobility_model = "static".into();
    cfg.radio.loss_prob = 0.0;
    cfg.flows = vec!["0>1@1".into(), "3>2@1".into()];
    cfg.warmup = 30.0;
    cfg.test = 30.0;

    let mut sim = Simulation::new(&cfg, 1)?;
    sim.run();
    for n in sim.nodes() {
        println!("node {}: {:?}, head {:?}", n.id, n.cluster.role(), n.cluster.head_id());
    }
    Ok(())
}

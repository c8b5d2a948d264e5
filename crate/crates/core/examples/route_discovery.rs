//! On-demand route discovery and delivery along a static four-node chain.

use manet_ids::harness::trace;
use manet_ids::harness::ScenarioConfig;
use manet_ids::world::Simulation;

fn main() -> manet_ids::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.node_count = 4;
    cfg.area_width = 800.0;
    cfg.positions = vec![[50.0, 50.0], [250.0, 50.0], [450.0, 50.0], [650.0, 50.0]];
    cfg.mobility_model = "static".into();
    cfg.radio.loss_prob = 0.0;
    cfg.flows = vec!["0>3@1".into()];
    cfg.warmup = 20.0;
    cfg.test = 20.0;

    let mut sim = Simulation::new(&cfg, 1)?;
    sim.run();
    let recs = trace::parse(sim.trace().as_str())?;
    for r in recs.iter().filter(|r| r.cat == "tx" && matches!(r.ev.as_str(), "rreq" | "rrep")).take(6) {
        println!("t={:.4} node {:?} sends {} to {}", r.time, r.node, r.ev, r.get("to").unwrap_or("-"));
    }
    let sent = recs.iter().filter(|r| r.is("data", "orig")).count();
    let got = recs.iter().filter(|r| r.is("data", "deliver")).count();
    println!("{got}/{sent} packets delivered");
    Ok(())
}

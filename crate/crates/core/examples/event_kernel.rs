//! Schedules a few events and draws from named random streams.

use manet_ids::kernel::{Kernel, RngStreams, SimTime, Target};
use manet_ids::NodeId;
use rand::Rng;

fn main() -> manet_ids::Result<()> {
    let mut k: Kernel<&str> = Kernel::new();
    k.schedule(SimTime::from_secs(2.0), Target::Global, "second")?;
    k.schedule(SimTime::from_secs(1.0), Target::Node(NodeId(3)), "first")?;
    k.schedule(SimTime::from_secs(2.0), Target::Global, "third (same time, later seq)")?;

    let fired = k.run_until(SimTime::from_secs(10.0), |k, ev| {
        println!("t={} seq={} {:?}: {}", ev.fire_at, ev.seq, ev.target, ev.payload);
        if ev.payload == "first" {
            k.schedule_in(0.5, Target::Global, "follow-up");
        }
    });
    println!("{fired} events, clock at {}", k.now());
    if let Err(e) = k.schedule(SimTime::from_secs(5.0), Target::Global, "too late") {
        println!("rejected: {e}");
    }

    let mut streams = RngStreams::new(42);
    let a: Vec<u32> = (0..3).map(|_| streams.rng("mobility").random_range(0..100)).collect();
    let b: Vec<u32> = (0..3).map(|_| streams.rng("traffic").random_range(0..100)).collect();
    println!("mobility {a:?} traffic {b:?}");
    Ok(())
}

//! The four attack presets over a few seeds (all ten with `--full`).

use manet_ids::harness::{self, ScenarioConfig};

fn main() -> manet_ids::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let seeds: Vec<u64> = if full { harness::table2_seeds() } else { vec![1, 2, 3] };
    println!("attack              DR      FAR     PDR");
    for cfg in harness::preset_table2(&ScenarioConfig::default()) {
        let b = harness::batch(&cfg, &seeds)?;
        let m = |v: Option<(f64, f64)>| v.map_or("-".to_string(), |(m, _)| format!("{m:.3}"));
        println!(
            "{:<18}  {:<6}  {:<6}  {}",
            b.attack,
            m(b.aggregate.detection_rate),
            m(b.aggregate.false_alarm_rate),
            m(b.aggregate.pdr)
        );
    }
    Ok(())
}

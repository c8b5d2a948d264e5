//! Saves a run to disk and scores it again from the trace file alone.

use manet_ids::harness::{self, compute_metrics, trace, ScenarioConfig};

fn main() -> manet_ids::Result<()> {
    let dir = std::env::temp_dir().join("manet-ids-replay");
    let mut cfg = ScenarioConfig::default();
    cfg.attack_kind = "sleep_deprivation".into();
    let out = harness::run(&cfg, 2)?;
    harness::write_run(&dir, &cfg, 2, &out, true)?;

    let text = std::fs::read_to_string(dir.join("trace.log")).expect("trace written");
    let saved = ScenarioConfig::load(&dir.join("scenario.toml"))?;
    let again = compute_metrics(&text, &saved)?;
    println!("records: {}", trace::parse(&text)?.len());
    println!("original {}\nreplayed {}", out.report.csv_row(), again.csv_row());
    println!("identical: {}", again == out.report);
    Ok(())
}

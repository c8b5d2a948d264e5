//! One scored run of an attack scenario.
//!
//! `cargo run --release --example attack_run -- blackhole 3`

use manet_ids::harness::{self, ScenarioConfig, CSV_HEADER};

fn main() -> manet_ids::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = args.next().unwrap_or_else(|| "blackhole".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = ScenarioConfig::default();
    cfg.attack_kind = kind;
    cfg.validate()?;
    let out = harness::run(&cfg, seed)?;
    println!("{CSV_HEADER}\n{}", out.report.csv_row());
    println!("attackers {:?}, detected {:?}", out.report.detail.attackers, out.report.detail.detected);
    println!("{} events, trace sha256 {}", out.events, out.trace_sha256);
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manet_ids::harness::{self, ScenarioConfig};

#[derive(Parser)]
#[command(name = "manet-ids", version, about = "Cluster-based intrusion detection simulator")]
#[command(after_long_help = ScenarioConfig::key_reference())]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and score it.
    Run {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write the full event trace.
        #[arg(long)]
        trace: bool,
    },
    /// Run one scenario over several seeds.
    Batch {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// `A..B` (inclusive) or a comma list.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// The four attack scenarios over seeds 1 to 10.
    Table2 {
        /// Base scenario; the attack kind is replaced per row.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Check a scenario file and print the effective configuration.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load(path: Option<&PathBuf>) -> manet_ids::Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match exec(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn exec(cmd: Cmd) -> manet_ids::Result<()> {
    match cmd {
        Cmd::Run {
            scenario,
            seed,
            out,
            trace,
        } => {
            let cfg = load(scenario.as_ref())?;
            let seed = seed.unwrap_or(cfg.seed);
            let res = harness::run(&cfg, seed)?;
            let m = harness::write_run(&out, &cfg, seed, &res, trace)?;
            println!("{}", harness::CSV_HEADER);
            println!("{}", res.report.csv_row());
            eprintln!("wrote {}", m.display());
        }
        Cmd::Batch { scenario, seeds, out } => {
            let cfg = load(scenario.as_ref())?;
            let seeds = harness::parse_seeds(&seeds)?;
            let b = harness::batch(&cfg, &seeds)?;
            let m = harness::write_batches(&out, std::slice::from_ref(&cfg), std::slice::from_ref(&b))?;
            print!("{}", b.csv());
            eprintln!("wrote {}", m.display());
        }
        Cmd::Table2 { scenario, out } => {
            let base = load(scenario.as_ref())?;
            let configs = harness::preset_table2(&base);
            let seeds = harness::table2_seeds();
            let batches = configs
                .iter()
                .map(|c| harness::batch(c, &seeds))
                .collect::<manet_ids::Result<Vec<_>>>()?;
            let m = harness::write_batches(&out, &configs, &batches)?;
            println!("{}", harness::CSV_HEADER);
            for b in &batches {
                print!("{}", b.csv().lines().skip(1 + b.rows.len()).map(|l| format!("{l}\n")).collect::<String>());
            }
            eprintln!("wrote {}", m.display());
        }
        Cmd::Validate { scenario } => {
            let cfg = ScenarioConfig::load(&scenario)?;
            print!("{}", cfg.to_toml_string());
            eprintln!("{}: ok", scenario.display());
        }
    }
    Ok(())
}

//! Scenario loading, runs, batches and result files.

pub mod config;
pub mod metrics;
pub mod trace;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::ScenarioConfig;
pub use metrics::{compute_metrics, MetricsReport, CSV_HEADER};

use crate::error::{Error, Result};
use crate::world::Simulation;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Attack kinds of the four-scenario comparison table, in row order.
pub const TABLE2_ATTACKS: [&str; 4] = ["flooding", "blackhole", "sleep_deprivation", "packet_drop"];

/// Seeds used for each row of the comparison table.
pub fn table2_seeds() -> Vec<u64> {
    (1..=10).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: String,
    pub trace_sha256: String,
    pub events: u64,
}

/// Runs one scenario with `seed` and scores it.
pub fn run(cfg: &ScenarioConfig, seed: u64) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg, seed)?;
    sim.run();
    let events = sim.events_fired();
    let trace = sim.into_trace().into_string();
    let report = compute_metrics(&trace, cfg)?;
    Ok(RunOutput {
        report,
        trace_sha256: trace::hash(&trace),
        trace,
        events,
    })
}

/// Mean and sample standard deviation of each metric over the runs that
/// define it.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Aggregate {
    pub detection_rate: Option<(f64, f64)>,
    pub false_alarm_rate: Option<(f64, f64)>,
    pub latency_s: Option<(f64, f64)>,
    pub overhead_bytes: Option<(f64, f64)>,
    pub pdr: Option<(f64, f64)>,
}

fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}

impl Aggregate {
    pub fn of(rows: &[MetricsReport]) -> Self {
        let col = |f: fn(&MetricsReport) -> Option<f64>| mean_sd(&rows.iter().filter_map(f).collect::<Vec<_>>());
        Aggregate {
            detection_rate: col(|r| r.detection_rate),
            false_alarm_rate: col(|r| r.false_alarm_rate),
            latency_s: col(|r| r.latency_s),
            overhead_bytes: col(|r| Some(r.overhead_bytes as f64)),
            pdr: col(|r| r.pdr),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub attack: String,
    pub rows: Vec<MetricsReport>,
    pub trace_hashes: Vec<(u64, String)>,
    pub aggregate: Aggregate,
}

impl BatchReport {
    /// Per-seed rows followed by a `mean` row and a `stdev` row.
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out.push_str(&self.aggregate_rows());
        out
    }

    fn aggregate_rows(&self) -> String {
        let a = &self.aggregate;
        let cell = |v: Option<(f64, f64)>, sd: bool| {
            v.map(|(m, s)| format!("{:.6}", if sd { s } else { m }))
                .unwrap_or_default()
        };
        let mut out = String::new();
        for (label, sd) in [("mean", false), ("stdev", true)] {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.attack,
                cell(a.detection_rate, sd),
                cell(a.false_alarm_rate, sd),
                cell(a.latency_s, sd),
                cell(a.overhead_bytes, sd),
                cell(a.pdr, sd),
                label
            ));
        }
        out
    }
}

/// Runs `cfg` once per seed in parallel.
pub fn batch(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<BatchReport> {
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    cfg.validate()?;
    let outs: Vec<RunOutput> = seeds
        .par_iter()
        .map(|s| {
            run(cfg, *s).map(|mut o| {
                o.trace = String::new();
                o
            })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<MetricsReport> = outs.iter().map(|o| o.report.clone()).collect();
    Ok(BatchReport {
        attack: cfg.attack_kind.clone(),
        aggregate: Aggregate::of(&rows),
        trace_hashes: seeds.iter().copied().zip(outs.into_iter().map(|o| o.trace_sha256)).collect(),
        rows,
    })
}

/// The four comparison scenarios, built on `base`.
pub fn preset_table2(base: &ScenarioConfig) -> Vec<ScenarioConfig> {
    TABLE2_ATTACKS
        .iter()
        .map(|k| {
            let mut c = base.clone();
            c.attack_kind = (*k).to_string();
            if *k == "packet_drop" {
                c.drop_prob = 1.0;
                c.attack_placement = "relay".into();
            }
            c
        })
        .collect()
}

/// Parses `A..B` (inclusive) or a comma list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = |reason: &str| Error::Config {
        key: "seeds".into(),
        reason: format!("{reason}: {s:?}"),
    };
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let a: u64 = a.trim().parse().map_err(|_| bad("bad range start"))?;
        let b: u64 = b.trim().parse().map_err(|_| bad("bad range end"))?;
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad("bad seed")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    Ok(seeds)
}

// ---- output files ----------------------------------------------------------

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes via a temporary file and a rename so readers never see a partial
/// manifest.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp, text)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub struct ManifestRun {
    pub attack: String,
    pub seed: u64,
    pub trace_sha256: String,
    pub trace_file: Option<String>,
}

fn manifest(configs: &[&ScenarioConfig], outputs: &[String], runs: &[ManifestRun]) -> String {
    let mut t = toml::Table::new();
    t.insert("artifact_version".into(), ARTIFACT_VERSION.into());
    t.insert(
        "outputs".into(),
        toml::Value::Array(outputs.iter().map(|o| o.as_str().into()).collect()),
    );
    let cfgs: Vec<toml::Value> = configs
        .iter()
        .map(|c| toml::Value::String(c.to_toml_string()))
        .collect();
    t.insert("config".into(), toml::Value::Array(cfgs));
    let runs: Vec<toml::Value> = runs
        .iter()
        .map(|r| {
            let mut e = toml::Table::new();
            e.insert("attack".into(), r.attack.as_str().into());
            e.insert("seed".into(), toml::Value::Integer(r.seed as i64));
            e.insert("trace_sha256".into(), r.trace_sha256.as_str().into());
            if let Some(f) = &r.trace_file {
                e.insert("trace_file".into(), f.as_str().into());
            }
            toml::Value::Table(e)
        })
        .collect();
    t.insert("run".into(), toml::Value::Array(runs));
    t.to_string()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `report.csv`, `report_detail.csv`, `scenario.toml`, optionally
/// `trace.log`, and the manifest last.
pub fn write_run(dir: &Path, cfg: &ScenarioConfig, seed: u64, out: &RunOutput, with_trace: bool) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut outputs = vec!["report.csv".to_string(), "report_detail.csv".into(), "scenario.toml".into()];
    write(
        &dir.join("report.csv"),
        &format!("{CSV_HEADER}\n{}\n", out.report.csv_row()),
    )?;
    write(
        &dir.join("report_detail.csv"),
        &format!("{}\n{}\n", MetricsReport::detail_header(), out.report.detail_row()),
    )?;
    write(&dir.join("scenario.toml"), &cfg.to_toml_string())?;
    let trace_file = if with_trace {
        write(&dir.join("trace.log"), &out.trace)?;
        outputs.push("trace.log".into());
        Some("trace.log".to_string())
    } else {
        None
    };
    let m = manifest(
        &[cfg],
        &outputs,
        &[ManifestRun {
            attack: cfg.attack_kind.clone(),
            seed,
            trace_sha256: out.trace_sha256.clone(),
            trace_file,
        }],
    );
    let path = dir.join("manifest.toml");
    write_atomic(&path, &m)?;
    Ok(path)
}

/// Writes a batch or table: `report.csv` (all rows), `report_detail.csv`,
/// one `report_<attack>.csv` per batch when there are several, and the
/// manifest.
pub fn write_batches(dir: &Path, configs: &[ScenarioConfig], batches: &[BatchReport]) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut outputs = vec!["report.csv".to_string(), "report_detail.csv".into()];
    if batches.len() > 1 {
        for b in batches {
            let name = format!("report_{}.csv", b.attack);
            write(&dir.join(&name), &b.csv())?;
            outputs.push(name);
        }
    }
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut detail = MetricsReport::detail_header();
    detail.push('\n');
    let mut runs = Vec::new();
    for b in batches {
        for r in &b.rows {
            csv.push_str(&r.csv_row());
            csv.push('\n');
            detail.push_str(&r.detail_row());
            detail.push('\n');
        }
        csv.push_str(&b.aggregate_rows());
        for (seed, h) in &b.trace_hashes {
            runs.push(ManifestRun {
                attack: b.attack.clone(),
                seed: *seed,
                trace_sha256: h.clone(),
                trace_file: None,
            });
        }
    }
    write(&dir.join("report.csv"), &csv)?;
    write(&dir.join("report_detail.csv"), &detail)?;
    let refs: Vec<&ScenarioConfig> = configs.iter().collect();
    let m = manifest(&refs, &outputs, &runs);
    let path = dir.join("manifest.toml");
    write_atomic(&path, &m)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("1..=2").unwrap(), vec![1, 2]);
        assert_eq!(parse_seeds("4,9").unwrap(), vec![4, 9]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn single_value_has_zero_spread() {
        assert_eq!(mean_sd(&[0.4]), Some((0.4, 0.0)));
        let (m, s) = mean_sd(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn table_presets_cover_four_attacks() {
        let p = preset_table2(&ScenarioConfig::default());
        let kinds: Vec<&str> = p.iter().map(|c| c.attack_kind.as_str()).collect();
        assert_eq!(kinds, TABLE2_ATTACKS);
        assert!(p.iter().all(|c| c.validate().is_ok()));
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::process::Command;

use manet_ids::harness::metrics::OVERHEAD_CLASSES;
use manet_ids::harness::trace;
use manet_ids::harness::{self, compute_metrics, ScenarioConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_manet-ids"))
}

fn short(kind: &str) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.attack_kind = kind.into();
    c.warmup = 100.0;
    c.test = 60.0;
    c
}

#[test]
fn metrics_recompute_from_saved_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short("blackhole");
    let out = harness::run(&cfg, 5).unwrap();
    harness::write_run(dir.path(), &cfg, 5, &out, true).unwrap();
    let text = fs::read_to_string(dir.path().join("trace.log")).unwrap();
    let again = ScenarioConfig::load(&dir.path().join("scenario.toml")).unwrap();
    assert_eq!(compute_metrics(&text, &again).unwrap(), out.report);
    let manifest: toml::Table = fs::read_to_string(dir.path().join("manifest.toml")).unwrap().parse().unwrap();
    let run = &manifest["run"].as_array().unwrap()[0];
    assert_eq!(run["trace_sha256"].as_str().unwrap(), trace::hash(&text));
}

#[test]
fn metrics_reject_a_foreign_config() {
    let cfg = short("flooding");
    let out = harness::run(&cfg, 1).unwrap();
    let mut other = cfg.clone();
    other.node_count = 20;
    assert!(compute_metrics(&out.trace, &other).is_err());
}

#[test]
fn overhead_categories_add_up() {
    let cfg = short("sleep_deprivation");
    let out = harness::run(&cfg, 2).unwrap();
    let (t0, t1) = (cfg.warmup, cfg.end());
    let mut ctl: BTreeMap<String, u64> = BTreeMap::new();
    let mut tags = 0;
    for r in trace::parse(&out.trace).unwrap() {
        if r.cat == "tx" && r.time >= t0 && r.time < t1 {
            tags += r.u64("tag").unwrap();
            let class = r.get("class").unwrap().to_string();
            if class != "routing" {
                *ctl.entry(class).or_default() += r.u64("ctl").unwrap();
            }
        }
    }
    ctl.retain(|_, v| *v > 0);
    let d = &out.report.detail;
    assert_eq!(d.overhead_by_class, ctl);
    assert_eq!(d.tag_bytes, tags);
    let sum: u64 = OVERHEAD_CLASSES.iter().map(|c| ctl.get(*c).copied().unwrap_or(0)).sum();
    assert_eq!(out.report.overhead_bytes, sum + tags);
}

#[test]
fn rates_stay_in_unit_interval() {
    for kind in ["none", "flooding", "packet_drop"] {
        let r = harness::run(&short(kind), 3).unwrap().report;
        for v in [r.detection_rate, r.false_alarm_rate, r.pdr].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&v), "{kind}: {v}");
        }
        assert_eq!(r.detection_rate.is_none(), kind == "none");
    }
}

#[test]
fn single_seed_batch_has_zero_spread() {
    let b = harness::batch(&short("flooding"), &[4]).unwrap();
    let (_, sd) = b.aggregate.false_alarm_rate.unwrap();
    assert_eq!(sd, 0.0);
    let csv = b.csv();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.lines().nth(3).unwrap().ends_with(",stdev"));
}

#[test]
fn cli_run_writes_trace_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.toml");
    fs::write(&scen, "attack.kind = \"flooding\"\nduration.warmup = 50.0\nduration.test = 30.0\n").unwrap();
    let out = dir.path().join("out");
    let st = bin()
        .args(["run", "--scenario"])
        .arg(&scen)
        .args(["--seed", "7", "--trace", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let stdout = String::from_utf8(st.stdout).unwrap();
    assert!(stdout.starts_with(harness::CSV_HEADER));
    for f in ["trace.log", "report.csv", "report_detail.csv", "scenario.toml", "manifest.toml"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let text = fs::read_to_string(out.join("trace.log")).unwrap();
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains(&trace::hash(&text)));
}

#[test]
fn cli_validate_names_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("bad.toml");
    fs::write(&scen, "traffic.flow_cnt = 3\n").unwrap();
    let st = bin().args(["validate", "--scenario"]).arg(&scen).output().unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("traffic.flow_cnt"));
}

#[test]
fn cli_validate_accepts_empty_file_as_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("empty.toml");
    fs::write(&scen, "").unwrap();
    let st = bin().args(["validate", "--scenario"]).arg(&scen).output().unwrap();
    assert!(st.status.success());
    let printed = ScenarioConfig::from_toml_str(&String::from_utf8(st.stdout).unwrap()).unwrap();
    assert_eq!(printed, ScenarioConfig::default());
}

#[test]
fn cli_rejects_unknown_subcommand_and_documents_keys() {
    let st = bin().arg("frobnicate").output().unwrap();
    assert!(!st.status.success());
    let help = bin().args(["--help"]).output().unwrap();
    let text = String::from_utf8(help.stdout).unwrap();
    for key in ["traffic.flow_count", "attack.placement", "metrics.grace"] {
        assert!(text.contains(key), "{key} not documented");
    }
}

#[test]
fn cli_batch_writes_rows_and_aggregates() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("s.toml");
    fs::write(&scen, "attack.kind = \"blackhole\"\nduration.warmup = 50.0\nduration.test = 30.0\n").unwrap();
    let st = bin()
        .args(["batch", "--scenario"])
        .arg(&scen)
        .args(["--seeds", "1..3", "--out"])
        .arg(dir.path().join("b"))
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = fs::read_to_string(dir.path().join("b/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 2);
    assert!(dir.path().join("b/manifest.toml").exists());
}

//! Scores a run trace against its ground truth.
//!
//! Everything is computed from the trace text alone, so a saved trace can be
//! re-scored later and must give the same numbers.

use std::collections::{BTreeMap, BTreeSet};

use super::config::ScenarioConfig;
use super::trace::{self, TraceRecord};
use crate::error::{Error, Result};
use crate::NodeId;

/// Classes counted in `overhead_bytes`. Tags are added on top.
pub const OVERHEAD_CLASSES: [&str; 4] = ["beacon", "report", "agent", "response"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub attack: String,
    pub seed: u64,
    /// Detected attackers over attackers; `None` without an attack.
    pub detection_rate: Option<f64>,
    /// Alerted benign (suspect, window) pairs over evaluated benign pairs.
    pub false_alarm_rate: Option<f64>,
    pub latency_s: Option<f64>,
    pub overhead_bytes: u64,
    pub pdr: Option<f64>,
    pub detail: MetricsDetail,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsDetail {
    pub attackers: Vec<NodeId>,
    pub detected: Vec<NodeId>,
    pub evaluated_pairs: usize,
    pub alerted_benign_pairs: usize,
    /// Share of test-period alerts that name a benign node.
    pub alert_far: Option<f64>,
    pub alerts: usize,
    pub benign_alerts: usize,
    pub overhead_by_class: BTreeMap<String, u64>,
    pub tag_bytes: u64,
    pub routing_bytes: u64,
    pub originated: u64,
    pub delivered: u64,
}

#[derive(Debug, Clone, Copy)]
struct Truth {
    node: NodeId,
    start: f64,
    stop: f64,
}

fn meta_check(rec: &TraceRecord, cfg: &ScenarioConfig) -> Result<()> {
    let bad = |what: &str| Error::TraceMismatch(what.to_string());
    if rec.u64("nodes") != Some(cfg.node_count as u64) {
        return Err(bad("node count"));
    }
    if rec.f64("warmup") != Some(cfg.warmup) {
        return Err(bad("warmup"));
    }
    if rec.f64("test") != Some(cfg.test) {
        return Err(bad("test period"));
    }
    if rec.f64("window") != Some(cfg.detection.window) {
        return Err(bad("window"));
    }
    Ok(())
}

/// Computes the report for one trace produced from `cfg`.
pub fn compute_metrics(text: &str, cfg: &ScenarioConfig) -> Result<MetricsReport> {
    let recs = trace::parse(text)?;
    let meta = recs
        .first()
        .filter(|r| r.is("meta", "run"))
        .ok_or_else(|| Error::TraceMismatch("missing run header".into()))?;
    meta_check(meta, cfg)?;
    let seed = meta.u64("seed").unwrap_or(0);
    let attack = meta.get("attack").unwrap_or("none").to_string();
    let (t0, t1) = (cfg.warmup, cfg.end());
    let w = cfg.detection.window;
    let in_test = |t: f64| t >= t0 && t < t1;

    let truth: Vec<Truth> = recs
        .iter()
        .filter(|r| r.is("attack", "install"))
        .filter_map(|r| {
            Some(Truth {
                node: r.node?,
                start: r.f64("start")?,
                stop: r.f64("stop")?,
            })
        })
        .collect();
    let attackers: BTreeSet<NodeId> = truth.iter().map(|t| t.node).collect();

    let mut d = MetricsDetail {
        attackers: attackers.iter().copied().collect(),
        ..Default::default()
    };
    let mut first_hit: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut evaluated: BTreeSet<(NodeId, u64)> = BTreeSet::new();
    let mut alerted: BTreeSet<(NodeId, u64)> = BTreeSet::new();
    let mut delivered: BTreeSet<u64> = BTreeSet::new();
    let mut originated: BTreeSet<u64> = BTreeSet::new();

    for r in &recs {
        match r.cat.as_str() {
            "alert" => {
                let Some(suspect) = r.node_field("suspect") else {
                    continue;
                };
                for tr in truth.iter().filter(|t| t.node == suspect) {
                    if r.time >= tr.start && r.time < tr.stop + cfg.grace {
                        let lat = r.time - tr.start;
                        first_hit
                            .entry(suspect)
                            .and_modify(|v| *v = v.min(lat))
                            .or_insert(lat);
                    }
                }
                if in_test(r.time) {
                    d.alerts += 1;
                    if !attackers.contains(&suspect) {
                        d.benign_alerts += 1;
                    }
                }
                if let Some(win) = r.u64("window") {
                    let ws = win as f64 * w;
                    if ws >= t0 && ws + w <= t1 && !attackers.contains(&suspect) {
                        alerted.insert((suspect, win));
                    }
                }
            }
            "detect" if r.ev == "sample" => {
                let (Some(suspect), Some(ws)) = (r.node_field("suspect"), r.f64("window_start")) else {
                    continue;
                };
                if ws >= t0 && ws + w <= t1 && !attackers.contains(&suspect) {
                    evaluated.insert((suspect, (ws / w).round() as u64));
                }
            }
            "tx" if in_test(r.time) => {
                let class = r.get("class").unwrap_or("");
                let ctl = r.u64("ctl").unwrap_or(0);
                let size = r.u64("size").unwrap_or(0);
                d.tag_bytes += r.u64("tag").unwrap_or(0);
                if class == "routing" {
                    d.routing_bytes += size;
                } else if ctl > 0 {
                    *d.overhead_by_class.entry(class.to_string()).or_insert(0) += ctl;
                }
            }
            "data" if r.get("kind") == Some("cbr") => match r.ev.as_str() {
                "orig" if in_test(r.time) => {
                    if let Some(pid) = r.u64("pid") {
                        originated.insert(pid);
                    }
                }
                "deliver" => {
                    if let Some(pid) = r.u64("pid") {
                        delivered.insert(pid);
                    }
                }
                _ => {}
            },
            _ => {}
        }
    }

    d.detected = first_hit.keys().copied().collect();
    evaluated.extend(alerted.iter().copied());
    d.evaluated_pairs = evaluated.len();
    d.alerted_benign_pairs = alerted.len();
    d.alert_far = (d.alerts > 0).then(|| d.benign_alerts as f64 / d.alerts as f64);
    d.originated = originated.len() as u64;
    d.delivered = originated.intersection(&delivered).count() as u64;

    let detection_rate = (!attackers.is_empty()).then(|| first_hit.len() as f64 / attackers.len() as f64);
    let latency_s = (!first_hit.is_empty()).then(|| first_hit.values().sum::<f64>() / first_hit.len() as f64);
    let false_alarm_rate = (d.evaluated_pairs > 0).then(|| d.alerted_benign_pairs as f64 / d.evaluated_pairs as f64);
    let pdr = (d.originated > 0).then(|| d.delivered as f64 / d.originated as f64);
    let overhead_bytes = OVERHEAD_CLASSES
        .iter()
        .map(|c| d.overhead_by_class.get(*c).copied().unwrap_or(0))
        .sum::<u64>()
        + d.tag_bytes;

    Ok(MetricsReport {
        attack,
        seed,
        detection_rate,
        false_alarm_rate,
        latency_s,
        overhead_bytes,
        pdr,
        detail: d,
    })
}

pub const CSV_HEADER: &str = "attack,detection_rate,false_alarm_rate,latency_s,overhead_bytes,pdr,seed";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsReport {
    /// One CSV row; missing values are empty fields.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.attack,
            opt(self.detection_rate),
            opt(self.false_alarm_rate),
            opt(self.latency_s),
            self.overhead_bytes,
            opt(self.pdr),
            self.seed
        )
    }

    pub fn detail_header() -> String {
        let mut cols = vec![
            "attack".to_string(),
            "seed".into(),
            "attackers".into(),
            "detected".into(),
            "evaluated_pairs".into(),
            "alerted_benign_pairs".into(),
            "alerts".into(),
            "benign_alerts".into(),
            "alert_far".into(),
            "originated".into(),
            "delivered".into(),
            "routing_bytes".into(),
            "tag_bytes".into(),
        ];
        for c in ["beacon", "cluster", "election", "report", "agent", "response", "learn"] {
            cols.push(format!("{c}_bytes"));
        }
        cols.join(",")
    }

    pub fn detail_row(&self) -> String {
        let d = &self.detail;
        let ids = |v: &[NodeId]| v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ");
        let mut cols = vec![
            self.attack.clone(),
            self.seed.to_string(),
            ids(&d.attackers),
            ids(&d.detected),
            d.evaluated_pairs.to_string(),
            d.alerted_benign_pairs.to_string(),
            d.alerts.to_string(),
            d.benign_alerts.to_string(),
            opt(d.alert_far),
            d.originated.to_string(),
            d.delivered.to_string(),
            d.routing_bytes.to_string(),
            d.tag_bytes.to_string(),
        ];
        for c in ["beacon", "cluster", "election", "report", "agent", "response", "learn"] {
            cols.push(d.overhead_by_class.get(c).copied().unwrap_or(0).to_string());
        }
        cols.join(",")
    }
}

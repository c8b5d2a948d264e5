//! Prints one PASS/FAIL line per acceptance criterion and exits non-zero if
//! any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use manet_ids::attacks::forge_rrep;
use manet_ids::detection::{DetectionConfig, Detector};
use manet_ids::harness::{self, trace, Aggregate, MetricsReport, ScenarioConfig};
use manet_ids::kernel::SimTime;
use manet_ids::routing::{RouteRequest, RreqId};
use manet_ids::NodeId;
use rayon::prelude::*;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn table2() -> (Verdict, Verdict) {
    let presets = harness::preset_table2(&ScenarioConfig::default());
    let floors: BTreeMap<&str, f64> = [
        ("flooding", 0.95),
        ("blackhole", 0.90),
        ("sleep_deprivation", 0.80),
        ("packet_drop", 0.85),
    ]
    .into_iter()
    .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    let mut audit = common::AgentAudit::default();
    for cfg in &presets {
        let started = Instant::now();
        let outs: Vec<(u64, harness::RunOutput)> = harness::table2_seeds()
            .par_iter()
            .map(|s| (*s, harness::run(cfg, *s).expect("preset runs")))
            .collect();
        let secs = started.elapsed().as_secs_f64();
        let rows: Vec<MetricsReport> = outs.iter().map(|(_, o)| o.report.clone()).collect();
        let agg = Aggregate::of(&rows);
        let dr = agg.detection_rate.map_or(0.0, |(m, _)| m);
        let far = agg.false_alarm_rate.map_or(1.0, |(m, _)| m);
        let floor = floors[cfg.attack_kind.as_str()];
        let ok = dr >= floor && far <= 0.05 && secs < 120.0;
        pass &= ok;
        parts.push(format!(
            "{} DR {dr:.3} (>= {floor}) FAR {far:.4} (<= 0.05) {secs:.1}s",
            cfg.attack_kind
        ));
        for (seed, o) in &outs {
            let label = format!("{} seed {seed}", cfg.attack_kind);
            common::audit_agents(&label, &o.trace, cfg.agents.max_retries as u64, &mut audit);
        }
    }
    let t2 = verdict("table2 reproduction", pass, parts.join("; "));
    // Comparison-table attackers are convicted by signatures before any head needs
    // agents, so grayhole runs are audited too.
    let gray = common::grayhole();
    let traces: Vec<(u64, String)> = (1..=10u64)
        .into_par_iter()
        .map(|s| (s, harness::run(&gray, s).expect("grayhole runs").trace))
        .collect();
    let mut extra = common::AgentAudit::default();
    for (seed, text) in &traces {
        common::audit_agents(&format!("grayhole seed {seed}"), text, gray.agents.max_retries as u64, &mut extra);
    }
    let summary = |a: &common::AgentAudit| {
        format!(
            "{} dispatches, {} lost, {} returned+lost, {} over-dispatched, {} missing re-dispatches",
            a.dispatches,
            a.lost,
            a.returned_and_lost.len(),
            a.over_dispatched.len(),
            a.missing_redispatch.len()
        )
    };
    let agents = verdict(
        "agent lifecycle",
        audit.is_clean() && extra.is_clean() && extra.dispatches > 0,
        format!("table2 runs: {}; grayhole runs: {}", summary(&audit), summary(&extra)),
    );
    (t2, agents)
}

fn determinism() -> Verdict {
    let scenarios = common::determinism_scenarios();
    let mismatched: Vec<String> = scenarios
        .par_iter()
        .filter_map(|c| {
            let a = harness::run(c, 11).expect("runs").trace_sha256;
            let b = harness::run(c, 11).expect("runs").trace_sha256;
            (a != b).then(|| c.attack_kind.clone())
        })
        .collect();
    verdict(
        "determinism",
        mismatched.is_empty(),
        format!("{} scenarios, mismatched: {mismatched:?}", scenarios.len()),
    )
}

fn clustering_oracle() -> Verdict {
    let outcomes: Vec<common::OracleOutcome> = common::oracle_topologies().iter().map(common::run_oracle).collect();
    let wrong: Vec<&str> = outcomes.iter().filter(|o| !o.ok()).map(|o| o.name).collect();
    let bridge = outcomes.iter().find(|o| o.name == "two_cluster_bridge").unwrap();
    let single_gateway = bridge.gateways.values().all(|g| g == &[NodeId(1)]);
    let line = outcomes.iter().find(|o| o.name == "distributed_gateway_line").unwrap();
    let distributed = line.dgateways.values().all(|g| g == &[NodeId(1), NodeId(2)]);
    verdict(
        "clustering oracle",
        wrong.is_empty() && single_gateway && distributed,
        format!(
            "{} topologies, wrong roles: {wrong:?}, one gateway per pair: {single_gateway}, distributed pair: {distributed}",
            outcomes.len()
        ),
    )
}

fn clustering_invariants() -> Verdict {
    let cfg = common::mobile_scenario();
    let parts: Vec<common::ClusteringViolations> = (1..=100u64)
        .into_par_iter()
        .map(|seed| {
            let mut v = common::ClusteringViolations::default();
            common::check_clustering(&cfg, seed, &mut v);
            v
        })
        .collect();
    let mut v = common::ClusteringViolations::default();
    for p in parts {
        v.far_registrations.extend(p.far_registrations);
        v.head_conflicts.extend(p.head_conflicts);
        v.cadence.extend(p.cadence);
        v.expiry.extend(p.expiry);
        v.registrations += p.registrations;
        v.beacon_gaps += p.beacon_gaps;
        v.expiries += p.expiries;
    }
    verdict(
        "passive clustering invariants",
        v.is_clean() && v.registrations > 0 && v.beacon_gaps > 0 && v.expiries > 0,
        format!(
            "100 seeds; {} registrations ({} beyond 2 hops), {} head conflicts, {} beacon gaps ({} off 20 s), {} expiries ({} off time-out)",
            v.registrations,
            v.far_registrations.len(),
            v.head_conflicts.len(),
            v.beacon_gaps,
            v.cadence.len(),
            v.expiries,
            v.expiry.len()
        ),
    )
}

fn trust_election() -> Verdict {
    let trust = common::props::check_trust(1000);
    let election = common::props::check_election(1000);
    verdict(
        "trust and election properties",
        trust.is_ok() && election.is_ok(),
        format!(
            "1000 trust walks: {}; 1000 tallies: {}",
            trust.err().unwrap_or_else(|| "ok".into()),
            election.err().unwrap_or_else(|| "ok".into())
        ),
    )
}

fn watchdog() -> Verdict {
    let cmp = common::watchdog_vs_truth(&common::dropper_chain(), 1);
    let off = cmp.windows.iter().filter(|(_, a, b)| a != b).count();
    verdict(
        "watchdog exactness",
        cmp.exact(),
        format!("{} windows compared, {off} differ", cmp.windows.len()),
    )
}

fn response() -> Verdict {
    let p = common::propagate_isolation();
    let pass = p.missing.is_empty()
        && (1..=3).contains(&p.max_round)
        && p.blocks_after_first == p.blocks_after_duplicate;
    verdict(
        "response propagation",
        pass,
        format!(
            "unblocked nodes {:?}, deepest round {}, block records {} then {} after a duplicate",
            p.missing, p.max_round, p.blocks_after_first, p.blocks_after_duplicate
        ),
    )
}

fn signatures() -> Verdict {
    let req = RouteRequest {
        id: RreqId {
            origin: NodeId(1),
            counter: 1,
        },
        target: NodeId(9),
        origin_seq: 5,
        dst_seq: Some(5),
        hop_count: 0,
    };
    let mut d = Detector::new(NodeId(0), DetectionConfig::default());
    d.on_rreq_seen(SimTime::from_secs(1.0), NodeId(1), &req);
    let fired = d
        .on_rrep_seen(SimTime::from_secs(1.01), NodeId(7), &forge_rrep(&req, None))
        .is_some_and(|a| a.source == "SIG-BH" && a.suspect == NodeId(7));

    let out = harness::run(&ScenarioConfig::default(), 1).expect("benign run");
    let recs = trace::parse(&out.trace).expect("trace parses");
    let packets = recs.iter().filter(|r| r.is("data", "orig")).count();
    let replies = recs.iter().filter(|r| r.is("tx", "rrep")).count();
    let misuse = recs.iter().filter(|r| r.is("alert", "local_misuse")).count();
    verdict(
        "signature checks",
        fired && packets >= 1000 && misuse == 0,
        format!("SIG-BH on forged reply: {fired}; benign run {packets} packets, {replies} replies, {misuse} misuse alerts"),
    )
}

fn main() -> ExitCode {
    let (t2, agents) = table2();
    let verdicts = [
        t2,
        determinism(),
        clustering_oracle(),
        clustering_invariants(),
        trust_election(),
        agents,
        watchdog(),
        response(),
        signatures(),
    ];
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    if verdicts.iter().all(|v| v.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

mod common;

use manet_ids::harness::{self, ScenarioConfig};

#[test]
fn equal_seeds_give_identical_traces() {
    for c in common::determinism_scenarios() {
        let a = harness::run(&c, 11).unwrap();
        let b = harness::run(&c, 11).unwrap();
        assert_eq!(a.trace_sha256, b.trace_sha256, "{}", c.attack_kind);
        assert_eq!(a.trace, b.trace);
    }
}

#[test]
fn different_seeds_give_different_traces() {
    let c = ScenarioConfig::default();
    assert_ne!(harness::run(&c, 1).unwrap().trace_sha256, harness::run(&c, 2).unwrap().trace_sha256);
}

#[test]
fn parallel_batch_matches_sequential_runs() {
    let c = &common::determinism_scenarios()[2];
    let b = harness::batch(c, &[1, 2, 3]).unwrap();
    for (seed, hash) in &b.trace_hashes {
        assert_eq!(&harness::run(c, *seed).unwrap().trace_sha256, hash);
    }
}

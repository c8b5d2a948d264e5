mod common;

use common::{dropper_chain, watchdog_vs_truth};

#[test]
fn forward_ratio_matches_trace_ground_truth() {
    for seed in [1, 2, 3] {
        let cmp = watchdog_vs_truth(&dropper_chain(), seed);
        assert!(!cmp.windows.is_empty(), "seed {seed}: no forward-ratio samples");
        for (ws, got, want) in &cmp.windows {
            assert_eq!(got, want, "seed {seed} window {ws}");
        }
    }
}

#[test]
fn dropper_is_neither_perfect_nor_silent() {
    let cmp = watchdog_vs_truth(&dropper_chain(), 1);
    assert!(cmp.windows.iter().any(|(_, v, _)| *v > 0.0 && *v < 1.0));
}

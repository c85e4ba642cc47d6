mod common;

use wsnsim::harness::{execute, Scenario};
use wsnsim::process::protocols::Registry;

#[test]
fn partitioned_traces_equal_monolithic() {
    let reg = Registry::default();
    for (name, text) in common::federation_scenarios().into_iter().take(3) {
        let mut s = Scenario::parse(&text, &reg).unwrap();
        s.stop = wsnsim::kernel::SimTime::from_secs(5);
        let mono = execute(&s, &reg).unwrap();
        assert!(
            mono.telemetry.trace_lines() > 10,
            "{name}: trivial workload"
        );
        for k in [2, 4] {
            s.partitions = k;
            let fed = execute(&s, &reg).unwrap();
            assert_eq!(fed.dispatched, mono.dispatched, "{name} k={k}");
            assert!(
                fed.telemetry.trace_text() == mono.telemetry.trace_text(),
                "{name} k={k}: traces differ"
            );
            assert_eq!(fed.nodes, mono.nodes, "{name} k={k}");
        }
    }
}

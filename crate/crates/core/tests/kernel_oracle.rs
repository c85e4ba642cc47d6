mod common;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn dispatch_order_matches_sorted_list(seed in any::<u64>()) {
        common::kernel_agrees(seed).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn oracle_is_not_vacuous() {
    // The workload must actually exercise follow-ups and cancellation.
    use rand::SeedableRng;
    let mut rng = rand_pcg::Pcg64Mcg::seed_from_u64(42);
    let ops = common::random_workload(&mut rng, 200);
    let (order, cancels) = common::run_oracle(&ops);
    let scheduled = ops
        .iter()
        .filter(|o| matches!(o, common::Op::Schedule { .. }))
        .count();
    assert!(order.len() > scheduled / 2);
    assert!(cancels.iter().any(|&c| c));
    assert!(cancels.iter().any(|&c| !c));
}

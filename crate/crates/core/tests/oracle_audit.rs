use proptest::prelude::*;

use decoy_core::oracle::{
    check_instance, exact_counts, random_instance, run_batch, slack_terms, verify_chain, GeneratorConfig, CHAIN_TOL,
};
use decoy_core::rng::{substream, Purpose};
use decoy_core::Execution;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn chain_holds_on_random_instances(seed in any::<u64>()) {
        let mut rng = substream(seed, Purpose::Sampling, 0);
        let (inst, _) = random_instance(&mut rng, &GeneratorConfig::default()).unwrap();
        let rec = verify_chain(&inst).unwrap();
        prop_assert!(rec.passed(), "{}", rec);
        let s = slack_terms(&inst).unwrap();
        prop_assert!(s.xi1 >= -CHAIN_TOL && s.xi2 >= -CHAIN_TOL && s.xi3 >= -CHAIN_TOL);
        let t = exact_counts(&inst);
        prop_assert!(rec.bound <= t.n_ks[1] * (1.0 + 1e-12) + CHAIN_TOL);
    }
}

#[test]
fn batch_is_independent_of_execution_mode() {
    let cfg = GeneratorConfig::default();
    let a = run_batch(300, 5, &cfg, Execution::Parallel);
    let b = run_batch(300, 5, &cfg, Execution::Sequential);
    assert!(a.all_passed());
    assert_eq!(a.min_xi(), b.min_xi());
    assert_eq!(a.rejected_draws(), b.rejected_draws());
}

#[test]
fn single_instance_check_reports_slack() {
    let mut rng = substream(1, Purpose::Sampling, 0);
    let (inst, rejected) = random_instance(&mut rng, &GeneratorConfig::default()).unwrap();
    let out = check_instance(0, &inst, rejected);
    assert!(out.passed());
    assert_eq!(out.rejected_draws, rejected);
}

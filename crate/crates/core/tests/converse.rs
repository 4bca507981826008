use proptest::prelude::*;
use twoway::channel::Dmc;
use twoway::converse::{check_identity_lemmas, check_markov_structure, check_round_bounds, expected_labels};
use twoway::protocol::{exact_joint, random_staggered, Alphabets};
use twoway::rng;
use twoway::source::JointSource;

fn lengths() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![
        prop::collection::vec(1usize..=2, 2),
        prop::collection::vec(1usize..=2, 4)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn chain_holds_on_random_codes(
        seed in any::<u64>(),
        lens in lengths(),
        eps in 0.0f64..0.5,
        corr in 0.0f64..0.5,
    ) {
        let src = JointSource::doubly_symmetric(corr).unwrap();
        let ch1 = Dmc::bsc(eps).unwrap();
        let ch2 = Dmc::bec(eps).unwrap();
        let alph = Alphabets { output2: 3, ..Alphabets::binary() };
        let code = random_staggered(1, &lens, alph, &mut rng::stream(seed, 0)).unwrap().to_general().unwrap();
        let joint = exact_joint(&code, &src, &ch1, &ch2).unwrap();
        let c1 = ch1.capacity(1e-12).unwrap().upper_bound();
        let c2 = ch2.capacity(1e-12).unwrap().upper_bound();
        let report = check_round_bounds(&joint, &lens, c1, c2).unwrap();
        prop_assert!(report.holds(), "{:?}", report.violations());
        let labels: Vec<&str> = report.checks.iter().map(|c| c.label.as_str()).collect();
        for l in expected_labels(lens.len()) {
            prop_assert!(labels.contains(&l.as_str()), "missing {}", l);
        }
        prop_assert!(check_identity_lemmas(&joint).unwrap().iter().all(|c| c.holds));
        prop_assert!(check_markov_structure(&joint, lens.len()).unwrap().iter().all(|c| c.holds));
    }
}

#[test]
fn understated_capacity_is_caught() {
    // Uncoded copy over a noiseless channel carries one bit per use.
    let src = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    let id = Dmc::identity(2).unwrap();
    let mut code = random_staggered(1, &[1, 1], Alphabets::binary(), &mut rng::stream(0, 0)).unwrap();
    // Round 2 history is (x2, v1) with x2 most significant.
    code.round_encoders = vec![vec![0, 1], vec![0, 0, 1, 1]];
    let joint = exact_joint(&code.to_general().unwrap(), &src, &id, &id).unwrap();
    assert!(check_round_bounds(&joint, &[1, 1], 1.0, 1.0).unwrap().holds());
    let report = check_round_bounds(&joint, &[1, 1], 0.5, 0.5).unwrap();
    assert!(!report.holds());
}

use proptest::prelude::*;
use twoway::channel::Dmc;
use twoway::protocol::{
    boundary_pad, exact_distortions, exact_joint, execute_monte_carlo, random_general,
    random_staggered, repetition_lift, stagger_transform, staggered_reduction, Alphabets,
    GeneralCode, GeneralCodeParams, Tap, User,
};
use twoway::rng;
use twoway::source::{DistortionMeasure, JointSource};
use twoway::Error;

fn general(seed: u64, n: usize, horizon: usize) -> GeneralCode {
    let p = GeneralCodeParams {
        n,
        horizon,
        alphabets: Alphabets::binary(),
        simultaneous: true,
    };
    random_general(&p, &mut rng::stream(seed, 0)).unwrap()
}

fn setting() -> (JointSource, Dmc, Dmc, DistortionMeasure) {
    (
        JointSource::doubly_symmetric(0.1).unwrap(),
        Dmc::bsc(0.05).unwrap(),
        Dmc::bsc(0.3).unwrap(),
        DistortionMeasure::hamming(2).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transforms_preserve_distortion(seed in any::<u64>(), n in 1usize..=2, horizon in 1usize..=3) {
        let (src, ch1, ch2, h) = setting();
        let code = general(seed, n, horizon);
        let d = exact_distortions(&code, &src, &ch1, &ch2, &h, &h).unwrap();
        let lifted = repetition_lift(&code, 3).unwrap();
        let padded = boundary_pad(&lifted).unwrap();
        let staggered = stagger_transform(&padded).unwrap();
        prop_assert!(staggered.schedule.is_staggered());
        for c in [&lifted, &padded, &staggered] {
            let e = exact_distortions(c, &src, &ch1, &ch2, &h, &h).unwrap();
            prop_assert!((d.0 - e.0).abs() <= 1e-12 && (d.1 - e.1).abs() <= 1e-12);
        }
        let (r1, r2) = code.rates();
        prop_assert_eq!(lifted.rates(), (r1, r2));
        let (s1, s2) = staggered.rates();
        prop_assert!(s1 >= r1 && s1 - r1 <= 2.0 / (3 * n) as f64 + 1e-12);
        prop_assert!(s2 >= r2 && s2 - r2 <= 2.0 / (3 * n) as f64 + 1e-12);
    }

    #[test]
    fn reduction_meets_epsilon(seed in any::<u64>(), eps in 0.05f64..1.0) {
        let code = general(seed, 1, 2);
        let s = staggered_reduction(&code, eps).unwrap();
        let (r1, r2) = code.rates();
        let (s1, s2) = s.rates();
        prop_assert!(s.schedule.is_staggered());
        prop_assert!(s1 - r1 <= eps + 1e-12 && s2 - r2 <= eps + 1e-12);
    }

    #[test]
    fn exact_joint_is_normalized(seed in any::<u64>()) {
        let (src, ch1, ch2, _) = setting();
        let code = random_staggered(1, &[1, 1, 2, 1], Alphabets::binary(), &mut rng::stream(seed, 1))
            .unwrap()
            .to_general()
            .unwrap();
        let joint = exact_joint(&code, &src, &ch1, &ch2).unwrap();
        let total: f64 = joint.mass().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(joint.mass().iter().all(|&m| m >= 0.0));
    }
}

#[test]
fn encoders_cannot_read_the_future() {
    let mut code = general(7, 1, 3);
    let slot = (0..3).find(|&i| code.schedule.active(User::One, i)).unwrap();
    let l = code.encoders1[slot].as_mut().unwrap();
    l.taps.push(Tap::Received(slot));
    l.table = l.table.iter().flat_map(|&v| [v, v]).collect();
    assert!(code.validate().is_err());
}

#[test]
fn monte_carlo_is_seed_deterministic() {
    let (src, ch1, ch2, h) = setting();
    let code = general(3, 2, 3);
    let a = execute_monte_carlo(&code, &src, &ch1, &ch2, &h, &h, 500, 11, 2).unwrap();
    let b = execute_monte_carlo(&code, &src, &ch1, &ch2, &h, &h, 500, 11, 2).unwrap();
    assert_eq!(a.d1, b.d1);
    assert_eq!(a.traces, b.traces);
    let c = execute_monte_carlo(&code, &src, &ch1, &ch2, &h, &h, 500, 12, 0).unwrap();
    assert_ne!((a.d1, a.d2), (c.d1, c.d2));
}

#[test]
fn json_round_trip() {
    let code = general(5, 2, 2);
    let back = GeneralCode::from_json(&code.to_json()).unwrap();
    assert_eq!(back, code);
    assert!(GeneralCode::from_json("{\"n\": 0}").is_err());
}

#[test]
fn mismatched_channel_is_rejected() {
    let (src, ch1, _, h) = setting();
    let code = general(1, 1, 2);
    let tern = Dmc::identity(3).unwrap();
    assert!(matches!(
        exact_distortions(&code, &src, &ch1, &tern, &h, &h),
        Err(Error::AlphabetMismatch(_))
    ));
}

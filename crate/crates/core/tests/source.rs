use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use twoway::infotheory::binary_entropy;
use twoway::source::{rate_distortion, DistortionMeasure, JointSource};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rd_is_monotone_and_convex(p in 0.05f64..0.5) {
        let h = DistortionMeasure::hamming(2).unwrap();
        let ds: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
        let r: Vec<f64> = ds
            .iter()
            .map(|&d| rate_distortion(&[p, 1.0 - p], &h, d, 1e-10).unwrap())
            .collect();
        for w in r.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-7);
        }
        for w in r.windows(3) {
            prop_assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-6);
        }
    }

    #[test]
    fn binary_rd_oracle(p in 0.05f64..0.5, t in 0.0f64..1.0) {
        let d = t * p;
        let h = DistortionMeasure::hamming(2).unwrap();
        let r = rate_distortion(&[p, 1.0 - p], &h, d, 1e-10).unwrap();
        prop_assert!((r - (binary_entropy(p) - binary_entropy(d))).abs() < 1e-5);
    }
}

#[test]
fn ternary_hamming_oracle() {
    // R(D) = log 3 - h(D) - D log 2 for a uniform ternary source.
    let h = DistortionMeasure::hamming(3).unwrap();
    let d = 0.2;
    let r = rate_distortion(&[1.0 / 3.0; 3], &h, d, 1e-11).unwrap();
    assert_abs_diff_eq!(r, 3f64.log2() - binary_entropy(d) - d, epsilon = 1e-6);
}

#[test]
fn sources_validate() {
    assert!(JointSource::new(2, 2, vec![0.5, 0.5, 0.5, -0.5]).is_err());
    let s = JointSource::doubly_symmetric(0.2).unwrap();
    assert_abs_diff_eq!(s.prob(0, 1), 0.1, epsilon = 1e-15);
    assert_eq!(s.marginal1(), vec![0.5, 0.5]);
}

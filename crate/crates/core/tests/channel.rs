use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use twoway::channel::Dmc;
use twoway::infotheory::binary_entropy;

fn channel() -> impl Strategy<Value = Dmc> {
    (2usize..=3, 2usize..=3).prop_flat_map(|(a, b)| {
        prop::collection::vec(0.01f64..1.0, a * b).prop_map(move |w| {
            let rows: Vec<Vec<f64>> = w
                .chunks(b)
                .map(|r| {
                    let s: f64 = r.iter().sum();
                    r.iter().map(|v| v / s).collect()
                })
                .collect();
            Dmc::from_rows(&rows).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn capacity_is_bracketed(ch in channel()) {
        let r = ch.capacity(1e-9).unwrap();
        let bound = (ch.input_size().min(ch.output_size()) as f64).log2();
        prop_assert!(r.capacity >= -1e-12 && r.capacity <= bound + 1e-12);
        prop_assert!(r.upper_bound() >= r.capacity);
        prop_assert!(r.upper_bound() - r.capacity <= 1e-8);
    }

    #[test]
    fn output_permutation_keeps_capacity(ch in channel()) {
        let perm: Vec<usize> = (0..ch.output_size()).rev().collect();
        let a = ch.capacity(1e-10).unwrap().capacity;
        let b = ch.permute_outputs(&perm).unwrap().capacity(1e-10).unwrap().capacity;
        prop_assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn extension_is_additive() {
    let ch = Dmc::bsc(0.15).unwrap();
    let c = ch.capacity(1e-12).unwrap().capacity;
    let c2 = ch.extend(2).unwrap().capacity(1e-12).unwrap().capacity;
    assert_abs_diff_eq!(c2, 2.0 * c, epsilon = 1e-7);
}

#[test]
fn erasure_and_identity_oracles() {
    let c = Dmc::bec(0.3).unwrap().capacity(1e-12).unwrap().capacity;
    assert_abs_diff_eq!(c, 0.7, epsilon = 1e-7);
    let c = Dmc::identity(3).unwrap().capacity(1e-12).unwrap().capacity;
    assert_abs_diff_eq!(c, 3f64.log2(), epsilon = 1e-9);
    let c = Dmc::bsc(0.2).unwrap().capacity(1e-12).unwrap().capacity;
    assert_abs_diff_eq!(c, 1.0 - binary_entropy(0.2), epsilon = 1e-9);
}

#[test]
fn malformed_rows_are_rejected() {
    assert!(Dmc::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
    assert!(Dmc::bsc(1.5).is_err());
}

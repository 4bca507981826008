use approx::assert_abs_diff_eq;
use twoway::infotheory::binary_entropy;
use twoway::kaspi::{evaluate, grid_search, optimize_point, optimize_point_traced, region_sweep, sweep_csv, OptimizeParams};
use twoway::source::{conditional_rate_distortion, DistortionMeasure, JointSource};
use twoway::Error;

fn hamming() -> DistortionMeasure {
    DistortionMeasure::hamming(2).unwrap()
}

#[test]
fn more_rounds_never_hurt() {
    let src = JointSource::doubly_symmetric(0.2).unwrap();
    let h = hamming();
    let mut p = OptimizeParams::new(0.15, 0.15, 2);
    p.seed = 3;
    p.restarts = 3;
    p.aux_sizes = Some(vec![3, 3]);
    let two = optimize_point(&src, &h, &h, &p).unwrap();
    p.q = 4;
    p.aux_sizes = Some(vec![3, 3, 2, 2]);
    let four = optimize_point(&src, &h, &h, &p).unwrap();
    assert!(four.rho1 + four.rho2 <= two.rho1 + two.rho2 + 1e-9);
}

#[test]
fn witness_reevaluates_to_reported_point() {
    let src = JointSource::doubly_symmetric(0.1).unwrap();
    let h = hamming();
    let mut p = OptimizeParams::new(0.05, 0.2, 2);
    p.restarts = 2;
    let pt = optimize_point(&src, &h, &h, &p).unwrap();
    let again = evaluate(&pt.witness, &src, &h, &h).unwrap();
    assert_eq!(again, pt);
    assert!(pt.d1 <= 0.05 + 1e-9 && pt.d2 <= 0.2 + 1e-9);
    assert_abs_diff_eq!(pt.round_rates.iter().sum::<f64>(), pt.rho1 + pt.rho2, epsilon = 1e-12);
}

#[test]
fn history_is_monotone() {
    let src = JointSource::doubly_symmetric(0.25).unwrap();
    let h = hamming();
    let out = optimize_point_traced(&src, &h, &h, &OptimizeParams::new(0.1, 0.1, 2)).unwrap();
    for w in out.history.windows(2) {
        assert!(w[1] <= w[0] + 1e-9);
    }
}

#[test]
fn sum_rate_dominates_conditional_rd() {
    // Side information at both ends lower-bounds each direction.
    let src = JointSource::doubly_symmetric(0.2).unwrap();
    let h = hamming();
    let pt = optimize_point(&src, &h, &h, &OptimizeParams::new(0.1, 0.1, 2)).unwrap();
    let lb = conditional_rate_distortion(&src, &h, 0.1, 1e-10).unwrap();
    assert!(pt.rho1 >= lb - 1e-6 && pt.rho2 >= lb - 1e-6);
}

#[test]
fn independent_grid_matches_rd() {
    let src = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    let h = hamming();
    let g = grid_search(&src, &h, &h, (0.2, 0.5), (2, 1), 32, (1.0, 1.0)).unwrap();
    assert!((g.envelope - (1.0 - binary_entropy(0.2))).abs() < 5e-3);
    assert!(g.best_single.unwrap() >= g.envelope - 1e-12);
}

#[test]
fn sweep_is_monotone_in_distortion() {
    let src = JointSource::doubly_symmetric(0.2).unwrap();
    let h = hamming();
    let mut p = OptimizeParams::new(0.0, 0.0, 2);
    p.restarts = 2;
    let rows = region_sweep(&src, &h, &h, &[(0.05, 0.05), (0.1, 0.1), (0.15, 0.15)], &p).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].rho1 + w[1].rho2 <= w[0].rho1 + w[0].rho2 + 1e-6);
    }
    assert_eq!(sweep_csv(&rows).lines().count(), 4);
}

#[test]
fn infeasible_target_is_reported() {
    let src = JointSource::doubly_symmetric(0.2).unwrap();
    let h = hamming();
    assert!(matches!(
        optimize_point(&src, &h, &h, &OptimizeParams::new(-0.1, 0.1, 2)),
        Err(Error::InfeasibleDistortion { .. } | Error::InfeasibleDistortionPair { .. } | Error::InvalidArgument(_))
    ));
}

use twoway::channel::Dmc;
use twoway::kaspi::{evaluate, AuxChain, RegionPoint};
use twoway::sepsim::{build_plan, run, MAX_CHUNK_BITS};
use twoway::source::{DistortionMeasure, JointSource};

fn hamming() -> DistortionMeasure {
    DistortionMeasure::hamming(2).unwrap()
}

/// U1 = X1, U2 = X2.
fn copy_point(src: &JointSource) -> RegionPoint {
    let chain = AuxChain {
        source_sizes: (2, 2),
        recon_sizes: (2, 2),
        aux_sizes: vec![2, 2],
        conditionals: vec![
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        ],
        recon1: (0..8).map(|i| (i >> 1) & 1).collect(),
        recon2: (0..8).map(|i| i & 1).collect(),
    };
    evaluate(&chain, src, &hamming(), &hamming()).unwrap()
}

/// Nothing is sent; each user guesses the other's symbol from its own.
fn silent_point(src: &JointSource) -> RegionPoint {
    let chain = AuxChain {
        source_sizes: (2, 2),
        recon_sizes: (2, 2),
        aux_sizes: vec![1, 1],
        conditionals: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        recon1: vec![0, 1],
        recon2: vec![0, 1],
    };
    evaluate(&chain, src, &hamming(), &hamming()).unwrap()
}

#[test]
fn plan_accounting_is_exact() {
    let src = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    let point = copy_point(&src);
    let ch1 = Dmc::bsc(0.05).unwrap();
    let ch2 = Dmc::bec(0.2).unwrap();
    for n in [1, 7, 33, 100] {
        let plan = build_plan(&point, &ch1, &ch2, n, 0.15).unwrap();
        plan.validate().unwrap();
        let mut uses = (0, 0);
        for (k, p) in plan.phases.iter().enumerate() {
            assert_eq!(p.message_bits, n);
            assert!(p.chunks.iter().all(|c| c.bits <= MAX_CHUNK_BITS));
            assert_eq!(p.chunks.iter().map(|c| c.bits).sum::<usize>(), p.message_bits);
            assert_eq!(p.chunks.iter().map(|c| c.uses).sum::<usize>(), p.uses);
            let cap = if k % 2 == 0 { plan.capacities.0 } else { plan.capacities.1 };
            assert!(p.uses as f64 >= n as f64 * 1.15 / cap - 1e-9);
            assert!((p.uses as f64) < n as f64 * 1.15 / cap + 1.0);
            if k % 2 == 0 { uses.0 += p.uses } else { uses.1 += p.uses }
        }
        assert_eq!(plan.uses_per_symbol(), (uses.0 as f64 / n as f64, uses.1 as f64 / n as f64));
    }
}

#[test]
fn silent_witness_matches_exact_distortion() {
    let src = JointSource::doubly_symmetric(0.2).unwrap();
    let point = silent_point(&src);
    assert!((point.d1 - 0.2).abs() < 1e-12);
    let bsc = Dmc::bsc(0.1).unwrap();
    let plan = build_plan(&point, &bsc, &bsc, 50, 0.2).unwrap();
    assert_eq!(plan.z(), vec![0, 0]);
    let res = run(&plan, &src, &bsc, &bsc, &hamming(), &hamming(), 400, 9).unwrap();
    assert!((res.d1 - point.d1).abs() <= 4.0 * res.d1_stderr);
    assert!((res.d2 - point.d2).abs() <= 4.0 * res.d2_stderr);
    assert_eq!(res.uses_per_symbol, (0.0, 0.0));
}

#[test]
fn binned_copy_beats_silence() {
    // Correlated sources bin at H(X1|X2) < 1 bit, so a few blocks still
    // decode to the wrong codeword.
    let src = JointSource::doubly_symmetric(0.3).unwrap();
    let point = copy_point(&src);
    assert!(point.rho1 < 0.9);
    let id = Dmc::identity(2).unwrap();
    let plan = build_plan(&point, &id, &id, 24, 0.0).unwrap();
    let res = run(&plan, &src, &id, &id, &hamming(), &hamming(), 30, 2).unwrap();
    assert!(res.d1 < 0.15 && res.d2 < 0.15, "{} {}", res.d1, res.d2);
    assert_eq!(res.stats.block_error_rate(), 0.0);
    assert_eq!(res.trials.len(), 30);
}

fn error_rate(n: usize, margin: f64) -> f64 {
    let src = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
    let point = copy_point(&src);
    let bsc = Dmc::bsc(0.1).unwrap();
    let plan = build_plan(&point, &bsc, &bsc, n, margin).unwrap();
    let res = run(&plan, &src, &bsc, &bsc, &hamming(), &hamming(), 300, 17).unwrap();
    res.stats.block_error_rate()
}

#[test]
fn longer_blocks_err_less() {
    let short = error_rate(4, 0.5);
    let long = error_rate(16, 0.5);
    assert!(long <= short, "n=16 {long} vs n=4 {short}");
}

#[test]
fn margin_buys_reliability() {
    let tight = error_rate(16, 0.0);
    let loose = error_rate(16, 0.5);
    assert!(tight > loose, "margin 0: {tight}, margin 0.5: {loose}");
}

#[test]
fn runs_are_reproducible() {
    let src = JointSource::doubly_symmetric(0.2).unwrap();
    let point = copy_point(&src);
    let bsc = Dmc::bsc(0.05).unwrap();
    let plan = build_plan(&point, &bsc, &bsc, 10, 0.3).unwrap();
    let a = run(&plan, &src, &bsc, &bsc, &hamming(), &hamming(), 50, 4).unwrap();
    let b = run(&plan, &src, &bsc, &bsc, &hamming(), &hamming(), 50, 4).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
}

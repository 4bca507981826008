//! The reproducible experiment battery behind the acceptance suite.
//!
//! Each `criterion_*` function runs one experiment from a seed and returns
//! a pass flag, a one-line deterministic detail string and CSV artifacts.
//! Wall-clock limits count toward the pass flag but never appear in the
//! artifacts, so reruns with the same seed produce identical bytes.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::channel::Dmc;
use crate::converse::{check_identity_lemmas, check_markov_structure, check_round_bounds};
use crate::error::Result;
use crate::infotheory::binary_entropy;
use crate::kaspi::{grid_search, optimize_point, OptimizeParams};
use crate::protocol::{
    boundary_pad, exact_distortions, exact_joint, execute_monte_carlo, random_general,
    random_staggered, repetition_lift, stagger_transform, Alphabets, GeneralCode,
    GeneralCodeParams,
};
use crate::rng;
use crate::sepsim::{build_plan, run};
use crate::source::{rate_distortion, DistortionMeasure, JointSource};

pub const DEFAULT_SEED: u64 = 20_240_917;

/// A named CSV output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    pub name: String,
    pub csv: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub artifacts: Vec<Artifact>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl CriterionOutcome {
    /// `[PASS] criterion N: title (detail) in X s`.
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {}: {} ({}) in {:.1} s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn artifact(name: &str, csv: String) -> Artifact {
    Artifact {
        name: name.into(),
        csv,
    }
}

fn finish(
    id: u8,
    title: &'static str,
    start: Instant,
    passed: bool,
    detail: String,
    artifacts: Vec<Artifact>,
) -> CriterionOutcome {
    CriterionOutcome {
        id,
        title,
        passed,
        detail,
        artifacts,
        elapsed: start.elapsed(),
    }
}

fn hamming() -> DistortionMeasure {
    DistortionMeasure::hamming(2).expect("binary Hamming")
}

/// Blahut-Arimoto capacity of BSC(p) against `1 - h(p)`.
pub fn criterion_1() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let mut csv = String::from("p,capacity,oracle,abs_error\n");
    let mut worst = 0.0f64;
    let mut slow = false;
    for p in [0.05, 0.1, 0.25, 0.5] {
        let t = Instant::now();
        let c = Dmc::bsc(p)?.capacity(1e-10)?.capacity;
        slow |= t.elapsed() >= Duration::from_secs(1);
        let oracle = 1.0 - binary_entropy(p);
        let err = (c - oracle).abs();
        worst = worst.max(err);
        csv.push_str(&format!("{p},{c:?},{oracle:?},{err:?}\n"));
    }
    let passed = worst <= 1e-6 && !slow;
    let detail = format!("max error {worst:.2e}, each under 1 s: {}", !slow);
    Ok(finish(1, "BSC capacity oracle", start, passed, detail, vec![artifact("capacity.csv", csv)]))
}

/// Binary Hamming `R(D)` against `1 - h(D)`.
pub fn criterion_2() -> Result<CriterionOutcome> {
    let start = Instant::now();
    let mut csv = String::from("D,rate,oracle,abs_error\n");
    let mut worst = 0.0f64;
    for d in [0.0, 0.1, 0.25, 0.5] {
        let r = rate_distortion(&[0.5, 0.5], &hamming(), d, 1e-10)?;
        let oracle = (1.0 - binary_entropy(d)).max(0.0);
        let err = (r - oracle).abs();
        worst = worst.max(err);
        csv.push_str(&format!("{d},{r:?},{oracle:?},{err:?}\n"));
    }
    let detail = format!("max error {worst:.2e}");
    Ok(finish(2, "binary R(D) oracle", start, worst <= 1e-6, detail, vec![artifact("rd.csv", csv)]))
}

fn random_binary_source<R: Rng + ?Sized>(r: &mut R) -> Result<JointSource> {
    let w: Vec<f64> = (0..4).map(|_| r.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    JointSource::new(2, 2, w.iter().map(|v| v / s).collect())
}

fn random_binary_channel<R: Rng + ?Sized>(r: &mut R) -> Result<Dmc> {
    let a: f64 = r.gen_range(0.0..0.5);
    let b: f64 = r.gen_range(0.0..0.5);
    Dmc::from_rows(&[vec![1.0 - a, a], vec![b, 1.0 - b]])
}

/// Number of codes in the converse sweep.
pub const CONVERSE_CODES: usize = 500;

/// Converse chain on random staggered binary codes.
pub fn criterion_3(seed: u64) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let base = rng::child_seed(seed, 3);
    let mut csv = String::from(
        "code,n,round_lengths,checks,min_slack,max_identity_residual,max_markov,violations\n",
    );
    let mut total_violations = 0;
    let mut checks = 0;
    for i in 0..CONVERSE_CODES {
        let mut r = rng::stream(base, i as u64);
        let n = r.gen_range(1..=2);
        let q = if r.gen_bool(0.5) { 2 } else { 4 };
        let lengths: Vec<usize> = (0..q).map(|_| r.gen_range(1..=2)).collect();
        let source = random_binary_source(&mut r)?;
        let ch1 = random_binary_channel(&mut r)?;
        let ch2 = random_binary_channel(&mut r)?;
        let code = random_staggered(n, &lengths, Alphabets::binary(), &mut r)?.to_general()?;
        let joint = exact_joint(&code, &source, &ch1, &ch2)?;
        let c1 = ch1.capacity(1e-12)?.upper_bound();
        let c2 = ch2.capacity(1e-12)?.upper_bound();
        let report = check_round_bounds(&joint, &lengths, c1, c2)?;
        let ids = check_identity_lemmas(&joint)?;
        let markov = check_markov_structure(&joint, q)?;
        let min_slack = report
            .checks
            .iter()
            .filter(|c| c.kind == crate::converse::CheckKind::Inequality)
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min);
        let max_id = ids.iter().map(|c| c.slack.abs()).fold(0.0, f64::max);
        let max_markov = markov.iter().map(|c| c.lhs).fold(0.0, f64::max);
        let violations = report.violations().len()
            + ids.iter().filter(|c| !c.holds).count()
            + markov.iter().filter(|c| !c.holds).count();
        total_violations += violations;
        checks += report.checks.len() + ids.len() + markov.len();
        let lens: Vec<String> = lengths.iter().map(|l| l.to_string()).collect();
        csv.push_str(&format!(
            "{i},{n},{},{},{min_slack:?},{max_id:?},{max_markov:?},{violations}\n",
            lens.join("-"),
            report.checks.len() + ids.len() + markov.len()
        ));
    }
    let in_time = start.elapsed() < Duration::from_secs(600);
    let detail = format!("{CONVERSE_CODES} codes, {checks} checks, {total_violations} violations");
    Ok(finish(
        3,
        "converse chain on random staggered codes",
        start,
        total_violations == 0 && in_time,
        detail,
        vec![artifact("converse_sweep.csv", csv)],
    ))
}

/// Number of codes in the transform suite.
pub const TRANSFORM_CODES: usize = 100;
/// Lift factors of the transform suite.
pub const LIFTS: [usize; 3] = [1, 4, 16];

/// Staggered version of `code` via lift by `h`, padding and splitting.
pub fn lift_and_stagger(code: &GeneralCode, h: usize) -> Result<GeneralCode> {
    stagger_transform(&boundary_pad(&repetition_lift(code, h)?)?)
}

/// Stagger transform on random general codes with simultaneous slots.
pub fn criterion_4(seed: u64) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let base = rng::child_seed(seed, 4);
    let source = JointSource::doubly_symmetric(0.2)?;
    let ch = Dmc::bsc(0.1)?;
    let h = hamming();
    let mut csv = String::from("code,n,H,d1,d1_staggered,d2,d2_staggered,excess1,excess2,delta\n");
    let mut ok = true;
    let mut worst_excess = [0.0f64; LIFTS.len()];
    for i in 0..TRANSFORM_CODES {
        let mut r = rng::stream(base, i as u64);
        let params = GeneralCodeParams {
            n: r.gen_range(1..=2),
            horizon: r.gen_range(2..=3),
            alphabets: Alphabets::binary(),
            simultaneous: true,
        };
        let code = random_general(&params, &mut r)?;
        let (d1, d2) = exact_distortions(&code, &source, &ch, &ch, &h, &h)?;
        let (r1, r2) = code.rates();
        for (j, &lift) in LIFTS.iter().enumerate() {
            let s = lift_and_stagger(&code, lift)?;
            let (e1, e2) = exact_distortions(&s, &source, &ch, &ch, &h, &h)?;
            let (s1, s2) = s.rates();
            let (x1, x2) = (s1 - r1, s2 - r2);
            let delta = 2.0 / (params.n * lift) as f64;
            ok &= s.schedule.is_staggered()
                && (d1 - e1).abs() <= 1e-12
                && (d2 - e2).abs() <= 1e-12
                && x1 >= -1e-12
                && x2 >= -1e-12
                && x1 <= delta + 1e-12
                && x2 <= delta + 1e-12;
            worst_excess[j] = worst_excess[j].max(x1 * params.n as f64).max(x2 * params.n as f64);
            csv.push_str(&format!(
                "{i},{},{lift},{d1:?},{e1:?},{d2:?},{e2:?},{x1:?},{x2:?},{delta:?}\n",
                params.n
            ));
        }
    }
    // Worst excess times n must shrink like 1/H: at most 2/H at every H.
    let shrinking = LIFTS
        .iter()
        .zip(&worst_excess)
        .all(|(&lift, &w)| w <= 2.0 / lift as f64 + 1e-12)
        && worst_excess.windows(2).all(|w| w[1] < w[0] || w[0] == 0.0);
    let detail = format!(
        "{TRANSFORM_CODES} codes, worst n*excess by H {:?}",
        worst_excess.iter().map(|w| format!("{w:.4}")).collect::<Vec<_>>()
    );
    Ok(finish(
        4,
        "stagger transform preserves distortion",
        start,
        ok && shrinking,
        detail,
        vec![artifact("transform_suite.csv", csv)],
    ))
}

/// Codes in the oracle comparison and trials per code.
pub const ORACLE_CODES: usize = 10;
pub const ORACLE_TRIALS: usize = 100_000;

fn within_3se(exact: f64, mc: f64, se: f64) -> bool {
    (exact - mc).abs() <= 3.0 * se + 1e-12
}

/// Monte-Carlo execution against exact distortions.
pub fn criterion_5(seed: u64) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let base = rng::child_seed(seed, 5);
    let source = JointSource::doubly_symmetric(0.2)?;
    let ch1 = Dmc::bsc(0.1)?;
    let ch2 = Dmc::bsc(0.2)?;
    let h = hamming();
    let mut csv = String::from("code,d1_exact,d1_mc,d1_stderr,d2_exact,d2_mc,d2_stderr\n");
    let mut ok = 0;
    for i in 0..ORACLE_CODES {
        let mut r = rng::stream(base, i as u64);
        let code = if i % 2 == 0 {
            random_staggered(2, &[1, 2, 2, 1], Alphabets::binary(), &mut r)?.to_general()?
        } else {
            let params = GeneralCodeParams {
                n: 2,
                horizon: 3,
                alphabets: Alphabets::binary(),
                simultaneous: true,
            };
            random_general(&params, &mut r)?
        };
        let (e1, e2) = exact_distortions(&code, &source, &ch1, &ch2, &h, &h)?;
        let mc = execute_monte_carlo(
            &code,
            &source,
            &ch1,
            &ch2,
            &h,
            &h,
            ORACLE_TRIALS,
            rng::child_seed(base, i as u64),
            0,
        )?;
        let good = within_3se(e1, mc.d1, mc.d1_stderr) && within_3se(e2, mc.d2, mc.d2_stderr);
        ok += usize::from(good);
        csv.push_str(&format!(
            "{i},{e1:?},{:?},{:?},{e2:?},{:?},{:?}\n",
            mc.d1, mc.d1_stderr, mc.d2, mc.d2_stderr
        ));
    }
    let detail = format!("{ok}/{ORACLE_CODES} codes within 3 standard errors at {ORACLE_TRIALS} trials");
    Ok(finish(
        5,
        "Monte-Carlo matches exact distortions",
        start,
        ok == ORACLE_CODES,
        detail,
        vec![artifact("oracle_equivalence.csv", csv)],
    ))
}

/// Two-round optimizer on independent sources against one-way `R(D)` and
/// the exhaustive grid.
pub fn criterion_6(seed: u64) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let source = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5])?;
    let h = hamming();
    let mut csv = String::from("D1,rho1,rho2,oracle,grid_envelope\n");
    let mut ok = true;
    let mut worst = (0.0f64, 0.0f64);
    for d in [0.1, 0.2] {
        let mut params = OptimizeParams::new(d, 0.5, 2);
        params.seed = rng::child_seed(seed, 6);
        let pt = optimize_point(&source, &h, &h, &params)?;
        let oracle = 1.0 - binary_entropy(d);
        let grid = grid_search(&source, &h, &h, (d, 0.5), (2, 1), 64, (1.0, 1.0))?;
        let heuristic = pt.rho1 + pt.rho2;
        let e_oracle = (pt.rho1 - oracle).abs();
        let e_grid = (heuristic - grid.envelope).abs();
        worst = (worst.0.max(e_oracle), worst.1.max(e_grid));
        ok &= e_oracle <= 2e-3 && e_grid <= 5e-3;
        csv.push_str(&format!(
            "{d},{:?},{:?},{oracle:?},{:?}\n",
            pt.rho1, pt.rho2, grid.envelope
        ));
    }
    let detail = format!(
        "max |rho1 - R(D)| {:.2e}, max |heuristic - grid| {:.2e}",
        worst.0, worst.1
    );
    Ok(finish(
        6,
        "two-round optimizer reduces to one-way R(D)",
        start,
        ok,
        detail,
        vec![artifact("kaspi_reduction.csv", csv)],
    ))
}

/// Block length, margin, trials and targets of the separation experiment.
pub const SEPARATION_N: usize = 200;
pub const SEPARATION_MARGIN: f64 = 0.2;
pub const SEPARATION_TRIALS: usize = 2000;
pub const SEPARATION_TARGET: f64 = 0.15;
pub const SEPARATION_LIMIT: f64 = 0.17;

/// Separation pipeline end to end on a correlated binary source.
pub fn criterion_7(seed: u64) -> Result<CriterionOutcome> {
    let start = Instant::now();
    let source = JointSource::doubly_symmetric(0.2)?;
    let ch = Dmc::bsc(0.1)?;
    let h = hamming();
    let mut params = OptimizeParams::new(SEPARATION_TARGET, SEPARATION_TARGET, 2);
    params.seed = rng::child_seed(seed, 7);
    let point = optimize_point(&source, &h, &h, &params)?;
    let plan = build_plan(&point, &ch, &ch, SEPARATION_N, SEPARATION_MARGIN)?;
    let res = run(&plan, &source, &ch, &ch, &h, &h, SEPARATION_TRIALS, rng::child_seed(seed, 70))?;
    let cap = plan.capacities.0;
    let n = SEPARATION_N as f64;
    // Each phase rounds its budget up to a whole channel use.
    let budget = |rho: f64, phases: usize| rho * (1.0 + SEPARATION_MARGIN) / cap + phases as f64 / n;
    let half = plan.phases.len() / 2;
    let (u1, u2) = res.uses_per_symbol;
    let uses_ok = u1 <= budget(point.rho1, half) + 1e-12
        && u2 <= budget(point.rho2, half) + 1e-12
        && (u1, u2) == plan.uses_per_symbol();
    let dist_ok = res.d1 <= SEPARATION_LIMIT && res.d2 <= SEPARATION_LIMIT;
    let in_time = start.elapsed() < Duration::from_secs(600);
    let mut summary = String::from("metric,value\n");
    for (k, v) in [
        ("rho1", point.rho1),
        ("rho2", point.rho2),
        ("witness_d1", point.d1),
        ("witness_d2", point.d2),
        ("d1", res.d1),
        ("d1_stderr", res.d1_stderr),
        ("d2", res.d2),
        ("d2_stderr", res.d2_stderr),
        ("uses_per_symbol_1", u1),
        ("uses_per_symbol_2", u2),
        ("budget_1", budget(point.rho1, half)),
        ("budget_2", budget(point.rho2, half)),
        ("block_error_rate", res.stats.block_error_rate()),
    ] {
        summary.push_str(&format!("{k},{v:?}\n"));
    }
    let detail = format!(
        "D1 {:.4} +- {:.4}, D2 {:.4} +- {:.4} (limit {SEPARATION_LIMIT}), uses/symbol ({u1:.3}, {u2:.3}) within budget: {uses_ok}, transport block errors {:.3}",
        res.d1,
        res.d1_stderr,
        res.d2,
        res.d2_stderr,
        res.stats.block_error_rate()
    );
    Ok(finish(
        7,
        "separation pipeline end to end",
        start,
        dist_ok && uses_ok && in_time,
        detail,
        vec![
            artifact("separation_summary.csv", summary),
            artifact("separation_trials.csv", res.to_csv()),
        ],
    ))
}

/// Criteria 1 through 7.
pub fn run_criteria(seed: u64) -> Result<Vec<CriterionOutcome>> {
    Ok(vec![
        criterion_1()?,
        criterion_2()?,
        criterion_3(seed)?,
        criterion_4(seed)?,
        criterion_5(seed)?,
        criterion_6(seed)?,
        criterion_7(seed)?,
    ])
}

/// Compares the artifacts of two batteries byte for byte.
pub fn criterion_8(first: &[CriterionOutcome], second: &[CriterionOutcome], elapsed: Duration) -> CriterionOutcome {
    let a: Vec<&Artifact> = first.iter().flat_map(|o| &o.artifacts).collect();
    let b: Vec<&Artifact> = second.iter().flat_map(|o| &o.artifacts).collect();
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.name.as_str())
        .collect();
    let passed = a.len() == b.len() && differing.is_empty();
    let detail = if passed {
        format!("{} artifacts identical across two runs", a.len())
    } else {
        format!("differing artifacts: {}", differing.join(" "))
    };
    CriterionOutcome {
        id: 8,
        title: "reruns are byte-identical",
        passed,
        detail,
        artifacts: Vec::new(),
        elapsed,
    }
}

/// Every criterion; the battery runs twice to check determinism.
pub fn reproduce_all(seed: u64) -> Result<Vec<CriterionOutcome>> {
    let mut first = run_criteria(seed)?;
    let start = Instant::now();
    let second = run_criteria(seed)?;
    let eighth = criterion_8(&first, &second, start.elapsed());
    first.push(eighth);
    Ok(first)
}

/// `criterion,title,passed,detail`, one row per criterion.
pub fn summary_csv(outcomes: &[CriterionOutcome]) -> String {
    let mut s = String::from("criterion,title,passed,detail\n");
    for o in outcomes {
        s.push_str(&format!(
            "{},\"{}\",{},\"{}\"\n",
            o.id,
            o.title,
            o.passed,
            o.detail.replace('"', "'")
        ));
    }
    s
}

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use twoway::channel::Dmc;
use twoway::converse::{check_identity_lemmas, check_markov_structure, check_round_bounds};
use twoway::harness;
use twoway::kaspi::{optimize_point, region_sweep, sweep_csv, OptimizeParams, RegionPoint};
use twoway::protocol::{
    boundary_pad, exact_distortions, exact_joint, random_general, random_staggered,
    repetition_lift, stagger_transform, Alphabets, GeneralCode, GeneralCodeParams,
};
use twoway::rng;
use twoway::sepsim::{build_plan, run as run_separation};
use twoway::source::{rate_distortion, DistortionMeasure, JointSource};

use crate::config::{self, Config, Loaded};
use crate::report::Report;
use crate::{Cli, CliError, Verb};

const DEFAULT_TOL: f64 = 1e-10;
const DEFAULT_OUT: &str = "out";

/// Summary text, plus a failure message when the run completed but
/// should exit nonzero.
pub struct Done {
    pub summary: String,
    pub failure: Option<String>,
}

struct Ctx<'a> {
    cli: &'a Cli,
    loaded: Loaded,
}

impl Ctx<'_> {
    fn config(&self) -> &Config {
        &self.loaded.config
    }

    fn tol(&self) -> Result<f64, CliError> {
        let t = self.cli.tol.or(self.config().tol).unwrap_or(DEFAULT_TOL);
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::Config(format!("tolerance {t} must lie in (0, 1)")));
        }
        Ok(t)
    }

    /// Seed for stochastic experiments; one must be given.
    fn seed(&self) -> Result<u64, CliError> {
        self.cli
            .seed
            .or(self.config().seed)
            .ok_or_else(|| CliError::Config(format!("{} needs a seed (--seed or `seed =`)", self.cli.verb.name())))
    }

    fn out(&self) -> PathBuf {
        self.cli
            .out
            .clone()
            .or_else(|| self.config().out.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| DEFAULT_OUT.into())
    }

    fn report(&self, seed: u64) -> Report {
        Report::new(self.cli.verb.name(), &self.loaded.sha256, seed)
    }

    fn alphabets(
        &self,
        src: &JointSource,
        ch: &(Dmc, Dmc),
        d: &(DistortionMeasure, DistortionMeasure),
    ) -> Alphabets {
        Alphabets {
            source1: src.size1(),
            source2: src.size2(),
            recon1: d.0.recon_size(),
            recon2: d.1.recon_size(),
            input1: ch.0.input_size(),
            output1: ch.0.output_size(),
            input2: ch.1.input_size(),
            output2: ch.1.output_size(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Done, CliError> {
    let loaded = config::load(cli.config.as_deref())?;
    if let Some(e) = &loaded.config.experiment {
        if e != cli.verb.name() {
            return Err(CliError::Config(format!(
                "config is for `{e}`, invoked as `{}`",
                cli.verb.name()
            )));
        }
    }
    let ctx = Ctx { cli, loaded };
    match cli.verb {
        Verb::Capacity => capacity(&ctx),
        Verb::Rd => rd(&ctx),
        Verb::ConverseSweep => converse_sweep(&ctx),
        Verb::KaspiPoint => kaspi_point(&ctx),
        Verb::KaspiSweep => kaspi_sweep(&ctx),
        Verb::Separation => separation(&ctx),
        Verb::TransformDemo => transform_demo(&ctx),
        Verb::Reproduce => reproduce(&ctx),
    }
}

fn ok(report: Report, dir: PathBuf) -> Result<Done, CliError> {
    Ok(Done {
        summary: report.write(&dir)?,
        failure: None,
    })
}

fn capacity(ctx: &Ctx) -> Result<Done, CliError> {
    let ch = ctx.config().channel()?;
    let r = ch.capacity(ctx.tol()?)?;
    let mut rep = ctx.report(0);
    let input: Vec<String> = r.optimal_input.iter().map(|p| format!("{p:?}")).collect();
    rep.csv(
        "capacity.csv",
        &format!(
            "capacity,upper_bound,iterations,optimal_input\n{:?},{:?},{},{}\n",
            r.capacity,
            r.upper_bound(),
            r.iterations,
            input.join(" ")
        ),
    );
    rep.line(format!("capacity {:.6} bits/use (upper bound {:.6})", r.capacity, r.upper_bound()));
    ok(rep, ctx.out())
}

fn rd(ctx: &Ctx) -> Result<Done, CliError> {
    let c = ctx.config();
    let sec = c.rd.as_ref().ok_or_else(|| CliError::Config("missing [rd] section".into()))?;
    let p = match &sec.p {
        Some(p) => p.clone(),
        None => c.source()?.marginal1(),
    };
    let d = match &c.distortion {
        Some(s) => s.build("distortion")?,
        None => DistortionMeasure::hamming(p.len()).map_err(|e| CliError::Config(e.to_string()))?,
    };
    let tol = ctx.tol()?;
    let mut rep = ctx.report(0);
    let mut csv = String::from("D,rate\n");
    for &t in &sec.targets {
        let r = rate_distortion(&p, &d, t, tol)?;
        csv.push_str(&format!("{t:?},{r:?}\n"));
        rep.line(format!("R({t}) = {r:.6}"));
    }
    rep.csv("rd.csv", &csv);
    ok(rep, ctx.out())
}

struct Setting {
    source: JointSource,
    channels: (Dmc, Dmc),
    distortions: (DistortionMeasure, DistortionMeasure),
}

fn setting(c: &Config) -> Result<Setting, CliError> {
    let source = c.source()?;
    let distortions = c.distortions(&source)?;
    Ok(Setting {
        channels: c.channels()?,
        distortions,
        source,
    })
}

fn converse_sweep(ctx: &Ctx) -> Result<Done, CliError> {
    let c = ctx.config();
    let s = setting(c)?;
    let sec = c.converse.clone().unwrap_or_default();
    let tol = ctx.tol()?;
    let cap1 = s.channels.0.capacity(tol)?.upper_bound();
    let cap2 = s.channels.1.capacity(tol)?.upper_bound();
    let alph = ctx.alphabets(&s.source, &s.channels, &s.distortions);
    let (seed, codes): (u64, Vec<GeneralCode>) = match &sec.code_file {
        Some(f) => (ctx.cli.seed.or(c.seed).unwrap_or(0), vec![config::read_code(&ctx.loaded.base, f)?]),
        None => {
            let seed = ctx.seed()?;
            if sec.block_lengths.is_empty()
                || sec.rounds.is_empty()
                || sec.rounds.iter().any(|q| *q == 0 || q % 2 != 0)
                || sec.round_length_max == 0
            {
                return Err(CliError::Config(
                    "[converse]: block_lengths and rounds must be nonempty, rounds even, round_length_max >= 1".into(),
                ));
            }
            let mut codes = Vec::with_capacity(sec.codes);
            for i in 0..sec.codes {
                let mut r = rng::stream(seed, i as u64);
                let n = *sec.block_lengths.choose(&mut r).expect("nonempty");
                let q = *sec.rounds.choose(&mut r).expect("nonempty");
                let lens: Vec<usize> = (0..q).map(|_| r.gen_range(1..=sec.round_length_max)).collect();
                codes.push(random_staggered(n, &lens, alph, &mut r)?.to_general()?);
            }
            (seed, codes)
        }
    };
    let mut rep = ctx.report(seed);
    let mut table = String::from("code,n,round_lengths,holds,checks,violations,min_slack\n");
    let mut detail = String::from("code,label,lhs,rhs,slack\n");
    let mut bad = 0;
    for (i, code) in codes.iter().enumerate() {
        let lens: Vec<usize> = code.rounds()?.iter().map(|r| r.2).collect();
        let joint = exact_joint(code, &s.source, &s.channels.0, &s.channels.1)?;
        let mut checks = check_round_bounds(&joint, &lens, cap1, cap2)?.checks;
        checks.extend(check_identity_lemmas(&joint)?);
        checks.extend(check_markov_structure(&joint, lens.len())?);
        let violations = checks.iter().filter(|c| !c.holds).count();
        let min_slack = checks
            .iter()
            .filter(|c| c.kind == twoway::converse::CheckKind::Inequality)
            .map(|c| c.slack)
            .fold(f64::INFINITY, f64::min);
        bad += usize::from(violations > 0);
        let l: Vec<String> = lens.iter().map(|v| v.to_string()).collect();
        table.push_str(&format!(
            "{i},{},{},{},{},{violations},{min_slack:?}\n",
            code.n,
            l.join("-"),
            violations == 0,
            checks.len()
        ));
        for c in &checks {
            detail.push_str(&format!("{i},{}\n", c.csv_record()));
        }
    }
    rep.csv("converse_sweep.csv", &table);
    rep.csv("converse_checks.csv", &detail);
    rep.line(format!("{} codes checked, {bad} with violations", codes.len()));
    let summary = rep.write(&ctx.out())?;
    Ok(Done {
        summary,
        failure: (bad > 0).then(|| format!("{bad} codes violate the converse chain")),
    })
}

fn kaspi_params(ctx: &Ctx, d1: f64, d2: f64, seed: u64) -> Result<OptimizeParams, CliError> {
    let sec = ctx.config().kaspi.as_ref();
    let mut p = OptimizeParams::new(d1, d2, sec.map_or(2, |s| s.q));
    p.seed = seed;
    if let Some(s) = sec {
        p.aux_sizes = s.aux_sizes.clone();
        if let Some([a, b]) = s.weights {
            p.weights = (a, b);
        }
        if let Some(r) = s.restarts {
            p.restarts = r;
        }
        if let Some(m) = s.max_sweeps {
            p.max_sweeps = m;
        }
    }
    Ok(p)
}

fn point_csv(pt: &RegionPoint) -> String {
    let rates: Vec<String> = pt.round_rates.iter().map(|r| format!("{r:?}")).collect();
    format!(
        "rho1,rho2,D1,D2,round_rates\n{:?},{:?},{:?},{:?},{}\n",
        pt.rho1,
        pt.rho2,
        pt.d1,
        pt.d2,
        rates.join(" ")
    )
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn kaspi_point(ctx: &Ctx) -> Result<Done, CliError> {
    let c = ctx.config();
    let sec = c.kaspi.as_ref().ok_or_else(|| CliError::Config("missing [kaspi] section".into()))?;
    let (Some(d1), Some(d2)) = (sec.d1, sec.d2) else {
        return Err(CliError::Config("[kaspi]: kaspi-point needs d1 and d2".into()));
    };
    let s = setting_source(c)?;
    let seed = ctx.seed()?;
    let pt = optimize_point(&s.0, &s.1 .0, &s.1 .1, &kaspi_params(ctx, d1, d2, seed)?)?;
    let mut rep = ctx.report(seed);
    rep.csv("kaspi_point.csv", &point_csv(&pt));
    rep.raw("witness.json", json(&pt.witness));
    rep.line(format!(
        "rho = ({:.6}, {:.6}) at D = ({:.6}, {:.6})",
        pt.rho1, pt.rho2, pt.d1, pt.d2
    ));
    ok(rep, ctx.out())
}

fn setting_source(c: &Config) -> Result<(JointSource, (DistortionMeasure, DistortionMeasure)), CliError> {
    let source = c.source()?;
    let d = c.distortions(&source)?;
    Ok((source, d))
}

fn kaspi_sweep(ctx: &Ctx) -> Result<Done, CliError> {
    let c = ctx.config();
    let sec = c.kaspi.as_ref().ok_or_else(|| CliError::Config("missing [kaspi] section".into()))?;
    let targets: Vec<(f64, f64)> = sec
        .targets
        .as_ref()
        .ok_or_else(|| CliError::Config("[kaspi]: kaspi-sweep needs targets".into()))?
        .iter()
        .map(|t| (t[0], t[1]))
        .collect();
    let s = setting_source(c)?;
    let seed = ctx.seed()?;
    let rows = region_sweep(&s.0, &s.1 .0, &s.1 .1, &targets, &kaspi_params(ctx, 0.0, 0.0, seed)?)?;
    let mut rep = ctx.report(seed);
    rep.csv("kaspi_sweep.csv", &sweep_csv(&rows));
    rep.raw(
        "kaspi_sweep.dat",
        rows.iter()
            .map(|r| format!("{} {} {} {}\n", r.d1, r.d2, r.rho1, r.rho2))
            .collect(),
    );
    rep.line(format!("{} target pairs optimized", rows.len()));
    ok(rep, ctx.out())
}

fn separation(ctx: &Ctx) -> Result<Done, CliError> {
    let c = ctx.config();
    let sec = c
        .separation
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [separation] section".into()))?;
    let s = setting(c)?;
    let seed = ctx.seed()?;
    let mut params = OptimizeParams::new(sec.d1, sec.d2, sec.q);
    params.seed = rng::child_seed(seed, 1);
    if let Some(r) = sec.restarts {
        params.restarts = r;
    }
    let (d1, d2) = &s.distortions;
    let point = optimize_point(&s.source, d1, d2, &params)?;
    let mut plan = build_plan(&point, &s.channels.0, &s.channels.1, sec.n, sec.margin)?;
    if let Some(b) = sec.max_codebook_bits {
        plan.max_codebook_bits = b;
    }
    if let Some(x) = sec.codebook_slack {
        plan.codebook_slack = x;
    }
    if let Some(t) = sec.calibration_trials {
        plan.calibration_trials = t;
    }
    plan.validate()?;
    let res = run_separation(&plan, &s.source, &s.channels.0, &s.channels.1, d1, d2, sec.trials, rng::child_seed(seed, 2))?;
    let (u1, u2) = res.uses_per_symbol;
    let mut rep = ctx.report(seed);
    rep.csv(
        "separation.csv",
        &format!(
            "rho1,rho2,witness_D1,witness_D2,D1,D1_stderr,D2,D2_stderr,uses_per_symbol_1,uses_per_symbol_2,block_error_rate\n{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{u1:?},{u2:?},{:?}\n",
            point.rho1,
            point.rho2,
            point.d1,
            point.d2,
            res.d1,
            res.d1_stderr,
            res.d2,
            res.d2_stderr,
            res.stats.block_error_rate()
        ),
    );
    rep.csv("separation_trials.csv", &res.to_csv());
    rep.raw("plan.json", json(&plan));
    rep.line(format!("witness rho = ({:.6}, {:.6})", point.rho1, point.rho2));
    rep.line(format!("z = {:?}", plan.z()));
    rep.line(format!(
        "D1 = {:.4} +- {:.4}, D2 = {:.4} +- {:.4} over {} trials",
        res.d1, res.d1_stderr, res.d2, res.d2_stderr, sec.trials
    ));
    rep.line(format!(
        "channel uses per symbol ({u1:.4}, {u2:.4}), transport block error rate {:.4}",
        res.stats.block_error_rate()
    ));
    ok(rep, ctx.out())
}

fn transform_demo(ctx: &Ctx) -> Result<Done, CliError> {
    let c = ctx.config();
    let s = setting(c)?;
    let sec = c.transform.clone().unwrap_or_default();
    if sec.lifts.is_empty() || sec.lifts.contains(&0) {
        return Err(CliError::Config("[transform]: lifts must be nonempty and >= 1".into()));
    }
    let (seed, code) = match &sec.code_file {
        Some(f) => (ctx.cli.seed.or(c.seed).unwrap_or(0), config::read_code(&ctx.loaded.base, f)?),
        None => {
            let seed = ctx.seed()?;
            let p = GeneralCodeParams {
                n: sec.n,
                horizon: sec.horizon,
                alphabets: ctx.alphabets(&s.source, &s.channels, &s.distortions),
                simultaneous: true,
            };
            (seed, random_general(&p, &mut rng::stream(seed, 0))?)
        }
    };
    let (ch1, ch2) = &s.channels;
    let (d1, d2) = &s.distortions;
    let exact = |g: &GeneralCode| exact_distortions(g, &s.source, ch1, ch2, d1, d2);
    let (e1, e2) = exact(&code)?;
    let (r1, r2) = code.rates();
    let mut rep = ctx.report(seed);
    let mut csv = String::from("H,horizon,staggered,rate1,rate2,D1,D2,excess1,excess2,delta\n");
    csv.push_str(&format!(
        "0,{},{},{r1:?},{r2:?},{e1:?},{e2:?},0.0,0.0,0.0\n",
        code.horizon(),
        code.schedule.is_staggered()
    ));
    let mut last = None;
    for &h in &sec.lifts {
        let t = stagger_transform(&boundary_pad(&repetition_lift(&code, h)?)?)?;
        let (a, b) = exact(&t)?;
        let (s1, s2) = t.rates();
        let delta = 2.0 / (code.n * h) as f64;
        csv.push_str(&format!(
            "{h},{},{},{s1:?},{s2:?},{a:?},{b:?},{:?},{:?},{delta:?}\n",
            t.horizon(),
            t.schedule.is_staggered(),
            s1 - r1,
            s2 - r2
        ));
        rep.line(format!(
            "H = {h}: rates ({s1:.4}, {s2:.4}) vs ({r1:.4}, {r2:.4}), |dD| = ({:.1e}, {:.1e})",
            (a - e1).abs(),
            (b - e2).abs()
        ));
        last = Some((h, t));
    }
    rep.csv("transform.csv", &csv);
    rep.raw("original_code.json", code.to_json() + "\n");
    if let Some((h, t)) = last {
        rep.raw(&format!("staggered_H{h}.json"), t.to_json() + "\n");
    }
    ok(rep, ctx.out())
}

fn reproduce(ctx: &Ctx) -> Result<Done, CliError> {
    let seed = ctx.cli.seed.or(ctx.config().seed).unwrap_or(harness::DEFAULT_SEED);
    let outcomes = harness::reproduce_all(seed)?;
    let mut rep = ctx.report(seed);
    for o in &outcomes {
        for a in &o.artifacts {
            rep.csv(&format!("criterion{}_{}", o.id, a.name), &a.csv);
        }
        rep.line(o.line());
    }
    rep.csv("criteria.csv", &harness::summary_csv(&outcomes));
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id.to_string()).collect();
    let summary = rep.write(&ctx.out())?;
    Ok(Done {
        summary,
        failure: (!failed.is_empty()).then(|| format!("failed criteria: {}", failed.join(", "))),
    })
}

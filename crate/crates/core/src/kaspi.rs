//! Two-way interactive rate-distortion points.
//!
//! An [`AuxChain`] describes `q` rounds of auxiliary messages
//! `U1, ..., Uq`; odd rounds are generated by User 1 from
//! `(X1, U1..U_{k-1})`, even rounds by User 2 from `(X2, U1..U_{k-1})`.
//! The rates are `rho1 = sum over odd k of I(X1; U_k | X2, U^{k-1})` and
//! `rho2 = sum over even k of I(X2; U_k | X1, U^{k-1})`.
//!
//! [`optimize_point`] searches for a chain minimizing `w1 rho1 + w2 rho2`
//! under two distortion constraints. It is a heuristic: block coordinate
//! descent on the variational form
//!
//! `J = E[(w1 + w2) log prod_k Q_k - w1 log r1(U^q | X2) - w2 log r2(U^q | X1)]`
//!
//! which equals the weighted rate when `r1`, `r2` are the true
//! conditionals. Each round update is an exact constrained minimization
//! (Gibbs form with Lagrange multipliers found by a bracketed root
//! search), so the
//! objective never increases once a feasible chain is reached.
//! [`grid_search`] is an exhaustive check for binary two-round problems.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{InfoEngine, Pmf, Variable};
use crate::rng;
use crate::source::{DistortionMeasure, JointSource};

const STOCH_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;
const LOG_FLOOR: f64 = 1e-300;
const LAMBDA_MAX: f64 = 1e9;
/// Most chains [`grid_search`] will enumerate.
pub const MAX_GRID_CHAINS: u128 = 50_000_000;

/// Auxiliary chain with deterministic reconstructions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxChain {
    pub source_sizes: (usize, usize),
    pub recon_sizes: (usize, usize),
    pub aux_sizes: Vec<usize>,
    /// Round `k` (0-based): rows indexed by (own source symbol, U_1..U_k)
    /// in mixed radix, each a pmf over `aux_sizes[k]`.
    pub conditionals: Vec<Vec<f64>>,
    /// Estimate of X1 at User 2, indexed by (x2, U^q).
    pub recon1: Vec<usize>,
    /// Estimate of X2 at User 1, indexed by (x1, U^q).
    pub recon2: Vec<usize>,
}

/// A rate pair, the distortions it achieves, and the witnessing chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub rho1: f64,
    pub rho2: f64,
    pub d1: f64,
    pub d2: f64,
    /// Round `k` term of the rate sums, in round order.
    pub round_rates: Vec<f64>,
    pub witness: AuxChain,
}

#[derive(Clone, Debug)]
struct Layout {
    nx1: usize,
    nx2: usize,
    sizes: Vec<usize>,
    /// `pre[j]` = product of the first `j` aux sizes.
    pre: Vec<usize>,
}

impl Layout {
    fn new(nx1: usize, nx2: usize, sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "round count must be even and >= 2, got {}",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidArgument("aux sizes must be >= 1".into()));
        }
        let mut pre = vec![1usize];
        for &s in sizes {
            let next = pre.last().unwrap().checked_mul(s);
            pre.push(next.ok_or(Error::TooLarge {
                required: u128::MAX,
                ceiling: crate::infotheory::MAX_CELLS as u128,
            })?);
        }
        crate::infotheory::checked_cells([nx1, nx2, pre[sizes.len()]])?;
        Ok(Self {
            nx1,
            nx2,
            sizes: sizes.to_vec(),
            pre,
        })
    }

    fn q(&self) -> usize {
        self.sizes.len()
    }

    fn level_len(&self, j: usize) -> usize {
        self.nx1 * self.nx2 * self.pre[j]
    }

    fn own_size(&self, j: usize) -> usize {
        if j % 2 == 0 {
            self.nx1
        } else {
            self.nx2
        }
    }

    fn rows(&self, j: usize) -> usize {
        self.own_size(j) * self.pre[j]
    }

    /// `(x1, x2, u-prefix)` of an index at level `j`.
    fn split(&self, j: usize, idx: usize) -> (usize, usize, usize) {
        let up = idx % self.pre[j];
        let x12 = idx / self.pre[j];
        (x12 / self.nx2, x12 % self.nx2, up)
    }

    /// Conditional row used by round `j` at a level-`j` index.
    fn row_of(&self, j: usize, idx: usize) -> usize {
        let (x1, x2, up) = self.split(j, idx);
        let own = if j % 2 == 0 { x1 } else { x2 };
        own * self.pre[j] + up
    }
}

impl AuxChain {
    pub fn q(&self) -> usize {
        self.aux_sizes.len()
    }

    fn layout(&self) -> Result<Layout> {
        Layout::new(self.source_sizes.0, self.source_sizes.1, &self.aux_sizes)
    }

    /// Checks shapes, row-stochasticity and reconstruction ranges.
    pub fn validate(&self) -> Result<()> {
        let lay = self.layout()?;
        if self.conditionals.len() != lay.q() {
            return Err(Error::InvalidArgument(format!(
                "{} conditionals for {} rounds",
                self.conditionals.len(),
                lay.q()
            )));
        }
        for (j, c) in self.conditionals.iter().enumerate() {
            let s = lay.sizes[j];
            if c.len() != lay.rows(j) * s {
                return Err(Error::ShapeMismatch {
                    expected: lay.rows(j) * s,
                    got: c.len(),
                });
            }
            for (r, row) in c.chunks(s).enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > STOCH_TOL {
                    return Err(Error::NotStochastic(format!("round {} row {r}", j + 1)));
                }
            }
        }
        let all = lay.pre[lay.q()];
        let check = |map: &[usize], n: usize, range: usize, what: &str| -> Result<()> {
            if map.len() != n * all {
                return Err(Error::ShapeMismatch {
                    expected: n * all,
                    got: map.len(),
                });
            }
            if let Some(&bad) = map.iter().find(|&&v| v >= range) {
                return Err(Error::SymbolOutOfRange {
                    symbol: bad,
                    size: range,
                })
                .map_err(|e| Error::InvalidArgument(format!("{what}: {e}")));
            }
            Ok(())
        };
        check(&self.recon1, lay.nx2, self.recon_sizes.0, "recon1")?;
        check(&self.recon2, lay.nx1, self.recon_sizes.1, "recon2")?;
        Ok(())
    }

    /// Joint pmf over `X1, X2, U1, ..., Uq`.
    pub fn joint(&self, source: &JointSource) -> Result<Pmf> {
        self.validate()?;
        if (source.size1(), source.size2()) != self.source_sizes {
            return Err(Error::AlphabetMismatch(format!(
                "chain expects sources {:?}, got ({}, {})",
                self.source_sizes,
                source.size1(),
                source.size2()
            )));
        }
        let lay = self.layout()?;
        let mass = forward(&lay, &source_table(source), &self.conditionals, lay.q());
        let mut vars = vec![
            Variable::new("X1", lay.nx1),
            Variable::new("X2", lay.nx2),
        ];
        vars.extend((0..lay.q()).map(|j| Variable::new(format!("U{}", j + 1), lay.sizes[j])));
        Pmf::new(vars, mass)
    }
}

fn source_table(source: &JointSource) -> Vec<f64> {
    let mut p = Vec::with_capacity(source.size1() * source.size2());
    for a in 0..source.size1() {
        for b in 0..source.size2() {
            p.push(source.prob(a, b));
        }
    }
    p
}

/// Joint mass at level `k`: `p(x1, x2) prod_{j<k} Q_j`.
fn forward(lay: &Layout, p: &[f64], q: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut f = p.to_vec();
    for j in 0..k {
        let s = lay.sizes[j];
        let mut next = vec![0.0; lay.level_len(j + 1)];
        for (idx, &m) in f.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let row = lay.row_of(j, idx);
            for u in 0..s {
                next[idx * s + u] = m * q[j][row * s + u];
            }
        }
        f = next;
    }
    f
}

fn check_measures(source: &JointSource, d1: &DistortionMeasure, d2: &DistortionMeasure) -> Result<()> {
    if d1.source_size() != source.size1() {
        return Err(Error::AlphabetMismatch("distortion measure 1 source size".into()));
    }
    if d2.source_size() != source.size2() {
        return Err(Error::AlphabetMismatch("distortion measure 2 source size".into()));
    }
    Ok(())
}

/// Rates and distortions of a chain, computed exactly.
pub fn evaluate(
    chain: &AuxChain,
    source: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
) -> Result<RegionPoint> {
    check_measures(source, d1, d2)?;
    if chain.recon_sizes != (d1.recon_size(), d2.recon_size()) {
        return Err(Error::AlphabetMismatch(format!(
            "chain reconstructions {:?}, measures ({}, {})",
            chain.recon_sizes,
            d1.recon_size(),
            d2.recon_size()
        )));
    }
    let joint = chain.joint(source)?;
    let lay = chain.layout()?;
    let q = lay.q();
    let e = InfoEngine::new(&joint);
    let mut round_rates = Vec::with_capacity(q);
    for j in 0..q {
        let uk = [format!("U{}", j + 1)];
        let prior: Vec<String> = (1..=j).map(|i| format!("U{i}")).collect();
        if j % 2 == 0 {
            let given: Vec<String> = std::iter::once("X2".to_string()).chain(prior).collect();
            round_rates.push(e.cmi(&["X1".to_string()], &uk, &given)?.max(0.0));
        } else {
            let given: Vec<String> = std::iter::once("X1".to_string()).chain(prior).collect();
            round_rates.push(e.cmi(&["X2".to_string()], &uk, &given)?.max(0.0));
        }
    }
    let all = lay.pre[q];
    let (mut dist1, mut dist2) = (0.0, 0.0);
    for (idx, &m) in joint.mass().iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (x1, x2, u) = lay.split(q, idx);
        dist1 += m * d1.d(x1, chain.recon1[x2 * all + u]);
        dist2 += m * d2.d(x2, chain.recon2[x1 * all + u]);
    }
    let rho1 = round_rates.iter().step_by(2).sum();
    let rho2 = round_rates.iter().skip(1).step_by(2).sum();
    Ok(RegionPoint {
        rho1,
        rho2,
        d1: dist1,
        d2: dist2,
        round_rates,
        witness: chain.clone(),
    })
}

/// Settings for [`optimize_point`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeParams {
    pub d1_target: f64,
    pub d2_target: f64,
    pub q: usize,
    /// Defaults to `|X| + 2` per round, with `|X|` the larger source alphabet.
    pub aux_sizes: Option<Vec<usize>>,
    pub weights: (f64, f64),
    pub restarts: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    /// Stop once a sweep improves the objective by less than this.
    pub tol: f64,
}

impl OptimizeParams {
    pub fn new(d1_target: f64, d2_target: f64, q: usize) -> Self {
        Self {
            d1_target,
            d2_target,
            q,
            aux_sizes: None,
            weights: (1.0, 1.0),
            restarts: 6,
            seed: 0,
            max_sweeps: 3000,
            tol: 1e-11,
        }
    }
}

/// Result of [`optimize_point_traced`].
#[derive(Clone, Debug)]
pub struct Optimized {
    pub point: RegionPoint,
    /// Weighted rate after each feasible sweep of the winning start.
    pub history: Vec<f64>,
    /// Index of the winning start.
    pub start: usize,
}

#[derive(Clone)]
struct State {
    q: Vec<Vec<f64>>,
    g1: Vec<usize>,
    g2: Vec<usize>,
    r1: Vec<f64>,
    r2: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Eval {
    rho1: f64,
    rho2: f64,
    d1: f64,
    d2: f64,
}

struct Solver<'a> {
    lay: Layout,
    p: Vec<f64>,
    p1: Vec<f64>,
    p2: Vec<f64>,
    d1: &'a DistortionMeasure,
    d2: &'a DistortionMeasure,
    w: (f64, f64),
    t: (f64, f64),
}

/// One round's constrained subproblem, aggregated over the other source.
struct Sub {
    s: usize,
    c: f64,
    w: Vec<f64>,
    ar: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    cur: Vec<f64>,
}

impl Sub {
    fn gibbs(&self, l1: f64, l2: f64) -> Vec<f64> {
        let s = self.s;
        let mut out = self.cur.clone();
        let mut e = vec![0.0; s];
        for (row, &w) in self.w.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            let base = row * s;
            for u in 0..s {
                let i = base + u;
                e[u] = -(self.ar[i] + l1 * self.a1[i] + l2 * self.a2[i]) / (self.c * w);
            }
            let m = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for u in 0..s {
                let v = (e[u] - m).exp2();
                out[base + u] = v;
                z += v;
            }
            for u in 0..s {
                out[base + u] /= z;
            }
        }
        out
    }

    /// (objective part, D1, D2) for a candidate.
    fn measure(&self, q: &[f64]) -> (f64, f64, f64) {
        let (mut obj, mut x1, mut x2) = (0.0, 0.0, 0.0);
        for (row, &w) in self.w.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            for u in 0..self.s {
                let i = row * self.s + u;
                let v = q[i];
                if v > 0.0 {
                    obj += v * (self.c * w * v.log2() + self.ar[i]);
                    x1 += v * self.a1[i];
                    x2 += v * self.a2[i];
                }
            }
        }
        (obj, x1, x2)
    }

    /// Smallest `l1 >= 0` with D1 <= t1 at fixed `l2` (or the largest tried).
    fn inner(&self, l2: f64, t1: f64) -> (f64, Vec<f64>, f64, f64) {
        let at = |l1: f64| {
            let q = self.gibbs(l1, l2);
            let (_, a, b) = self.measure(&q);
            (a - t1, (q, a, b))
        };
        let (l1, (_, (q, a, b))) = smallest_feasible(at);
        (l1, q, a, b)
    }

    fn solve(&self, t1: f64, t2: f64) -> Vec<f64> {
        let at = |l2: f64| {
            let (_, q, _, b) = self.inner(l2, t1);
            (b - t2, q)
        };
        smallest_feasible(at).1 .1
    }
}

/// For `f` nonincreasing in `l >= 0`, finds the smallest `l` with
/// `f(l) <= 0` by bracketing and Illinois-modified regula falsi. Returns
/// the feasible end of the final bracket, or the largest `l` tried when
/// none is feasible.
fn smallest_feasible<T>(f: impl Fn(f64) -> (f64, T)) -> (f64, (f64, T)) {
    let first = f(0.0);
    if first.0 <= 0.0 {
        return (0.0, first);
    }
    let (mut lo, mut f_lo) = (0.0, first.0);
    let mut hi = 1.0;
    let mut best = loop {
        let r = f(hi);
        if r.0 <= 0.0 || hi >= LAMBDA_MAX {
            break r;
        }
        lo = hi;
        f_lo = r.0;
        hi *= 4.0;
    };
    if best.0 > 0.0 {
        return (hi, best);
    }
    let mut f_hi = best.0;
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1.0) || f_hi > -1e-14 {
            break;
        }
        let mut x = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let r = f(x);
        if r.0 <= 0.0 {
            hi = x;
            f_hi = r.0;
            best = r;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        } else {
            lo = x;
            f_lo = r.0;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        }
    }
    (hi, best)
}

impl<'a> Solver<'a> {
    fn new(
        source: &JointSource,
        d1: &'a DistortionMeasure,
        d2: &'a DistortionMeasure,
        sizes: &[usize],
        w: (f64, f64),
        t: (f64, f64),
    ) -> Result<Self> {
        Ok(Self {
            lay: Layout::new(source.size1(), source.size2(), sizes)?,
            p: source_table(source),
            p1: source.marginal1(),
            p2: source.marginal2(),
            d1,
            d2,
            w,
            t,
        })
    }

    fn feasible(&self, e: &Eval) -> bool {
        e.d1 <= self.t.0 + FEAS_TOL && e.d2 <= self.t.1 + FEAS_TOL
    }

    fn violation(&self, a: f64, b: f64) -> f64 {
        (a - self.t.0).max(0.0) + (b - self.t.1).max(0.0)
    }

    fn objective(&self, e: &Eval) -> f64 {
        self.w.0 * e.rho1 + self.w.1 * e.rho2
    }

    fn empty_state(&self, q: Vec<Vec<f64>>) -> State {
        let all = self.lay.pre[self.lay.q()];
        State {
            q,
            g1: vec![0; self.lay.nx2 * all],
            g2: vec![0; self.lay.nx1 * all],
            r1: vec![0.0; self.lay.nx2 * all],
            r2: vec![0.0; self.lay.nx1 * all],
        }
    }

    /// Updates `r1`, `r2` and the reconstructions to their optima and
    /// returns the exact rates and distortions.
    fn refresh(&self, st: &mut State) -> Eval {
        let lay = &self.lay;
        let q = lay.q();
        let all = lay.pre[q];
        let f = forward(lay, &self.p, &st.q, q);
        st.r1.iter_mut().for_each(|v| *v = 0.0);
        st.r2.iter_mut().for_each(|v| *v = 0.0);
        for (idx, &m) in f.iter().enumerate() {
            let (x1, x2, u) = lay.split(q, idx);
            st.r1[x2 * all + u] += m;
            st.r2[x1 * all + u] += m;
        }
        let mut wts1 = vec![0.0; lay.nx1];
        for x2 in 0..lay.nx2 {
            for u in 0..all {
                let i = x2 * all + u;
                if st.r1[i] > 0.0 {
                    for (x1, w) in wts1.iter_mut().enumerate() {
                        *w = f[(x1 * lay.nx2 + x2) * all + u];
                    }
                    st.g1[i] = self.d1.best_reconstruction(&wts1);
                }
                if self.p2[x2] > 0.0 {
                    st.r1[i] /= self.p2[x2];
                }
            }
        }
        let mut wts2 = vec![0.0; lay.nx2];
        for x1 in 0..lay.nx1 {
            for u in 0..all {
                let i = x1 * all + u;
                if st.r2[i] > 0.0 {
                    for (x2, w) in wts2.iter_mut().enumerate() {
                        *w = f[(x1 * lay.nx2 + x2) * all + u];
                    }
                    st.g2[i] = self.d2.best_reconstruction(&wts2);
                }
                if self.p1[x1] > 0.0 {
                    st.r2[i] /= self.p1[x1];
                }
            }
        }
        let mut e = Eval {
            rho1: 0.0,
            rho2: 0.0,
            d1: 0.0,
            d2: 0.0,
        };
        for (idx, &m) in f.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let (x1, x2, u) = lay.split(q, idx);
            let cond = m / self.p[x1 * lay.nx2 + x2];
            e.rho1 += m * (cond / st.r1[x2 * all + u]).log2();
            e.rho2 += m * (cond / st.r2[x1 * all + u]).log2();
            e.d1 += m * self.d1.d(x1, st.g1[x2 * all + u]);
            e.d2 += m * self.d2.d(x2, st.g2[x1 * all + u]);
        }
        e.rho1 = e.rho1.max(0.0);
        e.rho2 = e.rho2.max(0.0);
        e
    }

    /// Exact constrained minimization over round `k` with everything else
    /// fixed. Returns whether the round changed.
    fn update_round(&self, st: &mut State, k: usize) -> bool {
        let lay = &self.lay;
        let q = lay.q();
        let all = lay.pre[q];
        let c = self.w.0 + self.w.1;
        let len_q = lay.level_len(q);
        let mut t = vec![0.0; len_q];
        let mut e1 = vec![0.0; len_q];
        let mut e2 = vec![0.0; len_q];
        for idx in 0..len_q {
            let (x1, x2, u) = lay.split(q, idx);
            t[idx] = -self.w.0 * st.r1[x2 * all + u].max(LOG_FLOOR).log2()
                - self.w.1 * st.r2[x1 * all + u].max(LOG_FLOOR).log2();
            e1[idx] = self.d1.d(x1, st.g1[x2 * all + u]);
            e2[idx] = self.d2.d(x2, st.g2[x1 * all + u]);
        }
        for j in (k + 1..q).rev() {
            let s = lay.sizes[j];
            let len = lay.level_len(j);
            let mut nt = vec![0.0; len];
            let mut n1 = vec![0.0; len];
            let mut n2 = vec![0.0; len];
            for idx in 0..len {
                let row = lay.row_of(j, idx);
                for u in 0..s {
                    let v = st.q[j][row * s + u];
                    if v > 0.0 {
                        let ch = idx * s + u;
                        nt[idx] += v * (t[ch] + c * v.log2());
                        n1[idx] += v * e1[ch];
                        n2[idx] += v * e2[ch];
                    }
                }
            }
            t = nt;
            e1 = n1;
            e2 = n2;
        }
        let f = forward(lay, &self.p, &st.q, k);
        let s = lay.sizes[k];
        let rows = lay.rows(k);
        let mut sub = Sub {
            s,
            c,
            w: vec![0.0; rows],
            ar: vec![0.0; rows * s],
            a1: vec![0.0; rows * s],
            a2: vec![0.0; rows * s],
            cur: st.q[k].clone(),
        };
        for (idx, &m) in f.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let row = lay.row_of(k, idx);
            sub.w[row] += m;
            for u in 0..s {
                sub.ar[row * s + u] += m * t[idx * s + u];
                sub.a1[row * s + u] += m * e1[idx * s + u];
                sub.a2[row * s + u] += m * e2[idx * s + u];
            }
        }
        let cand = sub.solve(self.t.0, self.t.1);
        let (obj_c, c1, c2) = sub.measure(&cand);
        let (obj_0, b1, b2) = sub.measure(&sub.cur);
        let cur_ok = b1 <= self.t.0 + FEAS_TOL && b2 <= self.t.1 + FEAS_TOL;
        let cand_ok = c1 <= self.t.0 + FEAS_TOL && c2 <= self.t.1 + FEAS_TOL;
        let accept = if cur_ok {
            cand_ok && obj_c <= obj_0
        } else {
            cand_ok || self.violation(c1, c2) < self.violation(b1, b2)
        };
        if accept {
            st.q[k] = cand;
        }
        accept
    }

    fn run(&self, mut st: State, max_sweeps: usize, tol: f64) -> (State, Eval, Vec<f64>) {
        let mut e = self.refresh(&mut st);
        let mut history = Vec::new();
        if self.feasible(&e) {
            history.push(self.objective(&e));
        }
        for _ in 0..max_sweeps {
            for k in 0..self.lay.q() {
                self.update_round(&mut st, k);
            }
            let next = self.refresh(&mut st);
            let was = self.feasible(&e).then(|| self.objective(&e));
            e = next;
            if self.feasible(&e) {
                let obj = self.objective(&e);
                history.push(obj);
                if let Some(prev) = was {
                    if prev - obj < tol {
                        break;
                    }
                }
            }
        }
        (st, e, history)
    }

    /// Round `j` uniform except rows fixed by `pick`.
    fn point_chain(&self, pick: impl Fn(usize, usize) -> usize) -> Vec<Vec<f64>> {
        (0..self.lay.q())
            .map(|j| {
                let s = self.lay.sizes[j];
                let mut c = vec![0.0; self.lay.rows(j) * s];
                for row in 0..self.lay.rows(j) {
                    let own = row / self.lay.pre[j];
                    c[row * s + pick(j, own) % s] = 1.0;
                }
                c
            })
            .collect()
    }

    /// Every round constant.
    fn constant_start(&self) -> Vec<Vec<f64>> {
        self.point_chain(|_, _| 0)
    }

    /// U1 = X1, U2 = X2 (as far as the alphabets allow), later rounds constant.
    fn copy_start(&self) -> Vec<Vec<f64>> {
        self.point_chain(|j, own| if j < 2 { own } else { 0 })
    }

    fn random_start<R: Rng>(&self, r: &mut R) -> Vec<Vec<f64>> {
        let copy = self.copy_start();
        copy.into_iter()
            .enumerate()
            .map(|(j, c)| {
                let s = self.lay.sizes[j];
                let mut out = vec![0.0; c.len()];
                for (row, chunk) in c.chunks(s).enumerate() {
                    let draw: Vec<f64> = (0..s).map(|_| -(1.0 - r.gen::<f64>()).ln()).collect();
                    let z: f64 = draw.iter().sum();
                    for u in 0..s {
                        out[row * s + u] = 0.5 * chunk[u] + 0.5 * draw[u] / z;
                    }
                }
                out
            })
            .collect()
    }

    fn to_chain(&self, st: &State) -> AuxChain {
        AuxChain {
            source_sizes: (self.lay.nx1, self.lay.nx2),
            recon_sizes: (self.d1.recon_size(), self.d2.recon_size()),
            aux_sizes: self.lay.sizes.clone(),
            conditionals: st.q.clone(),
            recon1: st.g1.clone(),
            recon2: st.g2.clone(),
        }
    }
}

/// Embeds a chain with fewer rounds by appending constant rounds.
fn embed(chain: &AuxChain, sizes: &[usize]) -> Vec<Vec<f64>> {
    let old_q = chain.q();
    let mut conds = chain.conditionals.clone();
    let lay = Layout::new(chain.source_sizes.0, chain.source_sizes.1, sizes)
        .expect("layout was validated");
    for j in old_q..sizes.len() {
        let s = sizes[j];
        let mut c = vec![0.0; lay.rows(j) * s];
        for row in 0..lay.rows(j) {
            c[row * s] = 1.0;
        }
        conds.push(c);
    }
    conds
}

/// Minimum achievable distortions `(D1, D2)`.
pub fn minimum_distortions(
    source: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
) -> (f64, f64) {
    (d1.d_min(&source.marginal1()), d2.d_min(&source.marginal2()))
}

/// Best weighted-rate chain found by [`optimize_point_traced`].
pub fn optimize_point(
    source: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    params: &OptimizeParams,
) -> Result<RegionPoint> {
    optimize_point_traced(source, d1, d2, params).map(|o| o.point)
}

/// Multi-start search. Start 0 is the all-constant chain, start 1 copies
/// the sources in the first two rounds, the rest are seeded random
/// perturbations of start 1. For `q >= 4` the optimum for `q - 2` rounds,
/// padded with constant rounds, is one more start, so more rounds never
/// report a worse point.
pub fn optimize_point_traced(
    source: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    params: &OptimizeParams,
) -> Result<Optimized> {
    check_measures(source, d1, d2)?;
    let (min1, min2) = minimum_distortions(source, d1, d2);
    let (t1, t2) = (params.d1_target, params.d2_target);
    if !(t1 >= min1 - 1e-12 && t2 >= min2 - 1e-12) {
        return Err(Error::InfeasibleDistortionPair {
            d1: t1,
            d2: t2,
            min1,
            min2,
        });
    }
    if !(params.weights.0 >= 0.0 && params.weights.1 >= 0.0)
        || params.weights.0 + params.weights.1 <= 0.0
    {
        return Err(Error::InvalidArgument("weights must be nonnegative and not both zero".into()));
    }
    let sizes = match &params.aux_sizes {
        Some(s) => s.clone(),
        None => vec![source.size1().max(source.size2()) + 2; params.q],
    };
    if sizes.len() != params.q {
        return Err(Error::InvalidArgument(format!(
            "{} aux sizes for q = {}",
            sizes.len(),
            params.q
        )));
    }
    let solver = Solver::new(source, d1, d2, &sizes, params.weights, (t1, t2))?;
    let mut starts = vec![solver.constant_start(), solver.copy_start()];
    for r in 0..params.restarts {
        let mut g = rng::stream(params.seed, r as u64);
        starts.push(solver.random_start(&mut g));
    }
    if params.q >= 4 {
        let mut sub = params.clone();
        sub.q -= 2;
        sub.aux_sizes = Some(sizes[..sub.q].to_vec());
        sub.seed = rng::child_seed(params.seed, sub.q as u64);
        if let Ok(prev) = optimize_point(source, d1, d2, &sub) {
            starts.push(embed(&prev.witness, &sizes));
        }
    }
    let runs: Vec<(State, Eval, Vec<f64>)> = starts
        .into_par_iter()
        .map(|q| solver.run(solver.empty_state(q), params.max_sweeps, params.tol))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, e, _)) in runs.iter().enumerate() {
        if solver.feasible(e) {
            let obj = solver.objective(e);
            if best.map_or(true, |(_, b)| obj < b) {
                best = Some((i, obj));
            }
        }
    }
    let Some((i, _)) = best else {
        return Err(Error::NotConverged {
            what: "interactive rate-distortion search (no feasible chain)",
            iterations: params.max_sweeps,
            gap: f64::NAN,
        });
    };
    let (st, _, history) = runs.into_iter().nth(i).expect("index from enumerate");
    let point = evaluate(&solver.to_chain(&st), source, d1, d2)?;
    Ok(Optimized {
        point,
        history,
        start: i,
    })
}

/// One row of a region sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d1: f64,
    pub d2: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub q: usize,
    pub seed: u64,
}

/// Optimizes every target pair with the same settings.
pub fn region_sweep(
    source: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    targets: &[(f64, f64)],
    params: &OptimizeParams,
) -> Result<Vec<SweepRow>> {
    targets
        .iter()
        .map(|&(a, b)| {
            let mut p = params.clone();
            p.d1_target = a;
            p.d2_target = b;
            let pt = optimize_point(source, d1, d2, &p)?;
            Ok(SweepRow {
                d1: a,
                d2: b,
                rho1: pt.rho1,
                rho2: pt.rho2,
                q: p.q,
                seed: p.seed,
            })
        })
        .collect()
}

/// CSV with header `D1,D2,rho1,rho2,q,seed`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("D1,D2,rho1,rho2,q,seed\n");
    for r in rows {
        s.push_str(&format!(
            "{:?},{:?},{:?},{:?},{},{}\n",
            r.d1, r.d2, r.rho1, r.rho2, r.q, r.seed
        ));
    }
    s
}

/// Outcome of [`grid_search`].
#[derive(Clone, Debug)]
pub struct GridResult {
    /// Lower convex envelope of the grid points (time sharing) at the targets.
    pub envelope: f64,
    /// Best single grid chain meeting both targets, if any.
    pub best_single: Option<f64>,
    pub chains: usize,
}

/// All ways to write `total` as an ordered sum of `parts` naturals.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive search over two-round chains for binary sources, with every
/// conditional row on the grid `{0, 1/res, ..., 1}`, reconstructions
/// Bayes-optimal. The envelope allows time sharing between grid chains
/// and is found through the LP dual, maximized by nested golden-section
/// search.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    source: &JointSource,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    targets: (f64, f64),
    aux_sizes: (usize, usize),
    resolution: usize,
    weights: (f64, f64),
) -> Result<GridResult> {
    check_measures(source, d1, d2)?;
    if source.size1() != 2 || source.size2() != 2 {
        return Err(Error::InvalidArgument("grid search needs binary sources".into()));
    }
    let (s1, s2) = aux_sizes;
    if !(1..=3).contains(&s1) || !(1..=3).contains(&s2) || resolution == 0 {
        return Err(Error::InvalidArgument(
            "grid search needs aux sizes in 1..=3 and resolution >= 1".into(),
        ));
    }
    let simplex1: Vec<Vec<f64>> = compositions(resolution, s1)
        .into_iter()
        .map(|c| c.iter().map(|&v| v as f64 / resolution as f64).collect())
        .collect();
    let simplex2: Vec<Vec<f64>> = compositions(resolution, s2)
        .into_iter()
        .map(|c| c.iter().map(|&v| v as f64 / resolution as f64).collect())
        .collect();
    let rows2 = 2 * s1;
    let n1 = (simplex1.len() as u128).pow(2);
    let n2 = (simplex2.len() as u128).pow(rows2 as u32);
    let total = n1.saturating_mul(n2);
    if total > MAX_GRID_CHAINS {
        return Err(Error::TooLarge {
            required: total,
            ceiling: MAX_GRID_CHAINS,
        });
    }
    let solver = Solver::new(source, d1, d2, &[s1, s2], weights, targets)?;
    let n2 = n2 as usize;
    let k2 = simplex2.len();
    let points: Vec<(f64, f64, f64)> = (0..n1 as usize)
        .into_par_iter()
        .flat_map_iter(|i1| {
            let q1: Vec<f64> = [i1 / simplex1.len(), i1 % simplex1.len()]
                .iter()
                .flat_map(|&k| simplex1[k].iter().cloned())
                .collect();
            let solver = &solver;
            let simplex2 = &simplex2;
            (0..n2).map(move |mut i2| {
                let mut q2 = Vec::with_capacity(rows2 * s2);
                let mut digits = vec![0; rows2];
                for d in digits.iter_mut().rev() {
                    *d = i2 % k2;
                    i2 /= k2;
                }
                for d in digits {
                    q2.extend_from_slice(&simplex2[d]);
                }
                let mut st = solver.empty_state(vec![q1.clone(), q2]);
                let e = solver.refresh(&mut st);
                (solver.objective(&e), e.d1, e.d2)
            })
        })
        .collect();
    let chains = points.len();
    let best_single = points
        .iter()
        .filter(|p| p.1 <= targets.0 + FEAS_TOL && p.2 <= targets.1 + FEAS_TOL)
        .map(|p| p.0)
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))));
    let front = pareto(points);
    let envelope = lp_envelope(&front, targets)?;
    Ok(GridResult {
        envelope,
        best_single,
        chains,
    })
}

/// Points not dominated in (rate, D1, D2), after merging near-identical
/// distortion pairs.
fn pareto(mut pts: Vec<(f64, f64, f64)>) -> Vec<(f64, f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut seen = std::collections::HashSet::new();
    pts.retain(|p| seen.insert(((p.1 * 1e7).round() as i64, (p.2 * 1e7).round() as i64)));
    let mut front: Vec<(f64, f64, f64)> = Vec::new();
    for p in pts {
        if !front.iter().any(|f| f.1 <= p.1 && f.2 <= p.2) {
            front.push(p);
        }
    }
    front
}

fn golden_max(lo: f64, hi: f64, iters: usize, f: impl Fn(f64) -> f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    f(lo).max(fc).max(fd)
}

/// min sum a_i R_i s.t. sum a_i D_i <= t, a in the simplex, via its dual.
fn lp_envelope(pts: &[(f64, f64, f64)], t: (f64, f64)) -> Result<f64> {
    if pts.is_empty() {
        return Err(Error::InvalidArgument("no grid points".into()));
    }
    let min1 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let min2 = pts.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let max_r = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let dual = |l1: f64, l2: f64| {
        pts.iter()
            .map(|p| p.0 + l1 * (p.1 - t.0) + l2 * (p.2 - t.1))
            .fold(f64::INFINITY, f64::min)
    };
    const LMAX: f64 = 1e3;
    let value = golden_max(0.0, LMAX, 90, |l2| golden_max(0.0, LMAX, 90, |l1| dual(l1, l2)));
    if value > max_r + 1e-6 {
        return Err(Error::InfeasibleDistortionPair {
            d1: t.0,
            d2: t.1,
            min1,
            min2,
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::binary_entropy;
    use approx::assert_abs_diff_eq;

    fn ham() -> DistortionMeasure {
        DistortionMeasure::hamming(2).unwrap()
    }

    fn copy_chain() -> AuxChain {
        // U1 = X1, U2 constant; recon1 = U1, recon2 = 0.
        AuxChain {
            source_sizes: (2, 2),
            recon_sizes: (2, 2),
            aux_sizes: vec![2, 1],
            conditionals: vec![vec![1.0, 0.0, 0.0, 1.0], vec![1.0; 4]],
            recon1: vec![0, 1, 0, 1],
            recon2: vec![0, 0, 0, 0],
        }
    }

    #[test]
    fn lossless_copy_chain() {
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        let pt = evaluate(&copy_chain(), &src, &ham(), &ham()).unwrap();
        assert_abs_diff_eq!(pt.rho1, binary_entropy(0.2), epsilon = 1e-12);
        assert_abs_diff_eq!(pt.rho2, 0.0, epsilon = 1e-12);
        assert_eq!(pt.d1, 0.0);
        assert_abs_diff_eq!(pt.d2, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_chain_has_zero_rates() {
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        let mut c = copy_chain();
        c.conditionals[0] = vec![1.0, 0.0, 1.0, 0.0];
        // best guess of X1 from X2 alone is X2
        c.recon1 = vec![0, 0, 1, 1];
        let pt = evaluate(&c, &src, &ham(), &ham()).unwrap();
        assert_eq!((pt.rho1, pt.rho2), (0.0, 0.0));
        assert_abs_diff_eq!(pt.d1, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn validation_errors() {
        let mut c = copy_chain();
        c.conditionals[0][0] = 0.5;
        assert!(matches!(c.validate(), Err(Error::NotStochastic(_))));
        let src = JointSource::from_rows(&[vec![0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5]]).unwrap();
        assert!(matches!(
            evaluate(&copy_chain(), &src, &ham(), &DistortionMeasure::hamming(3).unwrap()),
            Err(Error::AlphabetMismatch(_))
        ));
    }

    #[test]
    fn one_way_reduction_matches_binary_rd() {
        let src = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        let out = optimize_point_traced(&src, &ham(), &ham(), &OptimizeParams::new(0.1, 0.5, 2))
            .unwrap();
        assert_abs_diff_eq!(out.point.rho1, 1.0 - binary_entropy(0.1), epsilon = 2e-3);
        assert!(out.point.rho2 < 1e-6);
        assert!(out.point.d1 <= 0.1 + 1e-6);
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn zero_rate_corner() {
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        let pt = optimize_point(&src, &ham(), &ham(), &OptimizeParams::new(0.5, 0.5, 2)).unwrap();
        assert_eq!((pt.rho1, pt.rho2), (0.0, 0.0));
    }

    #[test]
    fn infeasible_targets_report_minimum() {
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        let d = DistortionMeasure::from_rows(&[vec![0.5, 1.0], vec![1.0, 0.5]]).unwrap();
        let err = optimize_point(&src, &d, &ham(), &OptimizeParams::new(0.1, 0.1, 2)).unwrap_err();
        assert_eq!(
            err,
            Error::InfeasibleDistortionPair {
                d1: 0.1,
                d2: 0.1,
                min1: 0.5,
                min2: 0.0
            }
        );
    }

    #[test]
    fn grid_envelope_near_rd() {
        let src = JointSource::independent(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        let g = grid_search(&src, &ham(), &ham(), (0.1, 0.5), (2, 1), 64, (1.0, 1.0)).unwrap();
        assert_eq!(g.chains, 65 * 65);
        let r = 1.0 - binary_entropy(0.1);
        assert!(g.envelope >= r - 1e-9 && g.envelope < r + 5e-3, "{}", g.envelope);
        assert!(g.best_single.unwrap() >= g.envelope - 1e-9);
        assert!(matches!(
            grid_search(&src, &ham(), &ham(), (0.1, 0.5), (3, 3), 64, (1.0, 1.0)),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(4, 1).len(), 1);
        assert_eq!(compositions(64, 2).len(), 65);
        assert_eq!(compositions(64, 3).len(), 65 * 66 / 2);
    }
}

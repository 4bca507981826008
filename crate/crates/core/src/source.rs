//! Correlated i.i.d. source pairs, distortion measures, and one-way
//! rate-distortion baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::sample_index;
use crate::error::{Error, Result};
use crate::infotheory::{Pmf, Variable};

/// Name of the User 1 source variable in [`JointSource::pmf`].
pub const X1: &str = "X1";
/// Name of the User 2 source variable in [`JointSource::pmf`].
pub const X2: &str = "X2";

/// A pair of dependent i.i.d. sources with joint law p(x1, x2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointSource {
    joint: Pmf,
}

impl JointSource {
    /// From a row-major matrix p[x1][x2].
    pub fn new(size1: usize, size2: usize, joint: Vec<f64>) -> Result<Self> {
        let joint = Pmf::new(
            vec![Variable::new(X1, size1), Variable::new(X2, size2)],
            joint,
        )?;
        Ok(Self { joint })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidPmf("source rows have different lengths".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Uniform bit X1 with X2 = X1 xor Bernoulli(crossover).
    pub fn doubly_symmetric(crossover: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&crossover) {
            return Err(Error::InvalidArgument(format!(
                "crossover {crossover} outside [0, 1]"
            )));
        }
        let a = (1.0 - crossover) / 2.0;
        let b = crossover / 2.0;
        Self::new(2, 2, vec![a, b, b, a])
    }

    /// Independent sources with the given marginals.
    pub fn independent(p1: &[f64], p2: &[f64]) -> Result<Self> {
        let joint = p1
            .iter()
            .flat_map(|a| p2.iter().map(move |b| a * b))
            .collect();
        Self::new(p1.len(), p2.len(), joint)
    }

    pub fn size1(&self) -> usize {
        self.joint.variables()[0].size
    }

    pub fn size2(&self) -> usize {
        self.joint.variables()[1].size
    }

    /// p(x1, x2).
    pub fn prob(&self, x1: usize, x2: usize) -> f64 {
        self.joint.mass()[x1 * self.size2() + x2]
    }

    pub fn pmf(&self) -> &Pmf {
        &self.joint
    }

    pub fn marginal1(&self) -> Vec<f64> {
        self.joint.marginal_table(0b01)
    }

    pub fn marginal2(&self) -> Vec<f64> {
        self.joint.marginal_table(0b10)
    }

    /// Draws `n` i.i.d. pairs.
    pub fn sample_block<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if n == 0 {
            return Err(Error::InvalidArgument("block length must be >= 1".into()));
        }
        let mut x1 = Vec::with_capacity(n);
        let mut x2 = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = self.sample_pair(rng);
            x1.push(a);
            x2.push(b);
        }
        Ok((x1, x2))
    }

    pub(crate) fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let idx = sample_index(self.joint.mass(), rng);
        (idx / self.size2(), idx % self.size2())
    }
}

/// A single-letter distortion measure d(x, x̂) >= 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionMeasure {
    source_size: usize,
    recon_size: usize,
    d: Vec<f64>,
}

impl DistortionMeasure {
    pub fn new(source_size: usize, recon_size: usize, d: Vec<f64>) -> Result<Self> {
        if source_size == 0 || recon_size == 0 {
            return Err(Error::InvalidDistortion("alphabets must be nonempty".into()));
        }
        if d.len() != source_size * recon_size {
            return Err(Error::ShapeMismatch {
                expected: source_size * recon_size,
                got: d.len(),
            });
        }
        if let Some(bad) = d.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidDistortion(format!(
                "entry {bad} must be finite and nonnegative"
            )));
        }
        Ok(Self {
            source_size,
            recon_size,
            d,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidDistortion("rows have different lengths".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn hamming(k: usize) -> Result<Self> {
        let mut d = vec![1.0; k * k];
        for x in 0..k {
            d[x * k + x] = 0.0;
        }
        Self::new(k, k, d)
    }

    pub fn source_size(&self) -> usize {
        self.source_size
    }

    pub fn recon_size(&self) -> usize {
        self.recon_size
    }

    #[inline]
    pub fn d(&self, x: usize, xhat: usize) -> f64 {
        self.d[x * self.recon_size + xhat]
    }

    fn row_min(&self, x: usize) -> f64 {
        self.d[x * self.recon_size..(x + 1) * self.recon_size]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest achievable expected distortion, Σ p(x) min d(x, ·).
    pub fn d_min(&self, p: &[f64]) -> f64 {
        p.iter().enumerate().map(|(x, px)| px * self.row_min(x)).sum()
    }

    /// Expected distortion of the best constant reconstruction.
    pub fn d_max(&self, p: &[f64]) -> f64 {
        (0..self.recon_size)
            .map(|xh| p.iter().enumerate().map(|(x, px)| px * self.d(x, xh)).sum())
            .fold(f64::INFINITY, f64::min)
    }

    /// Reconstruction minimizing Σ_x w(x) d(x, x̂); ties go to the smallest index.
    pub fn best_reconstruction(&self, weights: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for xh in 0..self.recon_size {
            let cost: f64 = weights
                .iter()
                .enumerate()
                .map(|(x, w)| w * self.d(x, xh))
                .sum();
            if cost < best.0 {
                best = (cost, xh);
            }
        }
        best.1
    }
}

/// Per-symbol average distortion (1/n) Σ d(x_i, x̂_i).
pub fn avg_distortion(x: &[usize], xhat: &[usize], d: &DistortionMeasure) -> Result<f64> {
    if x.len() != xhat.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: xhat.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty sequences".into()));
    }
    let mut acc = 0.0;
    for (&a, &b) in x.iter().zip(xhat) {
        if a >= d.source_size {
            return Err(Error::SymbolOutOfRange {
                symbol: a,
                size: d.source_size,
            });
        }
        if b >= d.recon_size {
            return Err(Error::SymbolOutOfRange {
                symbol: b,
                size: d.recon_size,
            });
        }
        acc += d.d(a, b);
    }
    Ok(acc / x.len() as f64)
}

/// R(D) in bits per symbol for a memoryless source with marginal `p`.
pub fn rate_distortion(p: &[f64], d: &DistortionMeasure, target: f64, tol: f64) -> Result<f64> {
    Ok(RdSolver::new(vec![(1.0, p.to_vec())], d)?.solve(target, tol)?.rate())
}

/// Conditional rate-distortion R_{X1|X2}(D): both ends observe X2.
pub fn conditional_rate_distortion(
    source: &JointSource,
    d: &DistortionMeasure,
    target: f64,
    tol: f64,
) -> Result<f64> {
    let p2 = source.marginal2();
    let classes = (0..source.size2())
        .filter(|&b| p2[b] > 0.0)
        .map(|b| {
            let cond = (0..source.size1())
                .map(|a| source.prob(a, b) / p2[b])
                .collect();
            (p2[b], cond)
        })
        .collect();
    Ok(RdSolver::new(classes, d)?.solve(target, tol)?.rate())
}

/// Certified bracket on a rate-distortion value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdBounds {
    pub lower: f64,
    pub upper: f64,
}

impl RdBounds {
    pub fn rate(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

const RD_MAX_INNER: usize = 200_000;
const RD_MAX_BISECTIONS: usize = 200;

/// Blahut–Arimoto solver for (conditional) rate-distortion.
///
/// The source is a mixture of classes observed at both ends, each with a
/// weight and a conditional source pmf. A common slope couples the classes.
struct RdSolver<'a> {
    classes: Vec<(f64, Vec<f64>)>,
    d: &'a DistortionMeasure,
    /// Per-class expected distortion of the best constant reconstruction.
    d_max: f64,
    d_min: f64,
}

/// One converged Blahut–Arimoto solve at a fixed slope.
struct SlopePoint {
    distortion: f64,
    rate: f64,
    /// Lower bound valid for every D: rate(D) >= intercept - slope * D.
    intercept: f64,
    slope: f64,
}

impl<'a> RdSolver<'a> {
    fn new(classes: Vec<(f64, Vec<f64>)>, d: &'a DistortionMeasure) -> Result<Self> {
        for (_, p) in &classes {
            if p.len() != d.source_size() {
                return Err(Error::AlphabetMismatch(format!(
                    "source has {} symbols, distortion measure expects {}",
                    p.len(),
                    d.source_size()
                )));
            }
        }
        let d_max = classes.iter().map(|(w, p)| w * d.d_max(p)).sum();
        let d_min = classes.iter().map(|(w, p)| w * d.d_min(p)).sum();
        Ok(Self {
            classes,
            d,
            d_max,
            d_min,
        })
    }

    fn solve(&self, target: f64, tol: f64) -> Result<RdBounds> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
        }
        if target < self.d_min - 1e-12 {
            return Err(Error::InfeasibleDistortion {
                requested: target,
                minimum: self.d_min,
            });
        }
        if target >= self.d_max {
            return Ok(RdBounds {
                lower: 0.0,
                upper: 0.0,
            });
        }
        let mut q: Vec<Vec<f64>> = self
            .classes
            .iter()
            .map(|_| vec![1.0 / self.d.recon_size() as f64; self.d.recon_size()])
            .collect();
        if target <= self.d_min + 1e-15 {
            let pt = self.solve_slope(f64::INFINITY, &mut q, tol)?;
            return Ok(RdBounds {
                lower: pt.intercept.min(pt.rate),
                upper: pt.rate,
            });
        }

        // Achievable points bracketing the target; (d_max, 0) always is.
        let mut above = (self.d_max, 0.0);
        let mut below: (f64, f64);
        let mut lower = 0.0f64;
        let (mut s_lo, mut s_hi) = (0.0, 1.0);
        loop {
            let pt = self.solve_slope(s_hi, &mut q, tol)?;
            lower = lower.max(pt.intercept - pt.slope * target);
            if pt.distortion <= target {
                below = (pt.distortion, pt.rate);
                break;
            }
            above = (pt.distortion, pt.rate);
            s_lo = s_hi;
            s_hi *= 2.0;
            if s_hi > 1e6 {
                return Err(Error::NotConverged {
                    what: "rate-distortion slope search",
                    iterations: 20,
                    gap: pt.distortion - target,
                });
            }
        }
        for _ in 0..RD_MAX_BISECTIONS {
            let (db, rb) = below;
            let (da, ra) = above;
            let upper = if da > db {
                rb + (ra - rb) * (target - db) / (da - db)
            } else {
                rb
            };
            if upper - lower < tol {
                return Ok(RdBounds {
                    lower: lower.max(0.0),
                    upper: upper.max(0.0),
                });
            }
            let s = 0.5 * (s_lo + s_hi);
            let pt = self.solve_slope(s, &mut q, tol)?;
            lower = lower.max(pt.intercept - pt.slope * target);
            if pt.distortion <= target {
                below = (pt.distortion, pt.rate);
                s_hi = s;
            } else {
                above = (pt.distortion, pt.rate);
                s_lo = s;
            }
        }
        Err(Error::NotConverged {
            what: "rate-distortion bisection",
            iterations: RD_MAX_BISECTIONS,
            gap: f64::NAN,
        })
    }

    /// Runs BA at slope `s` (bits per unit distortion), warm-starting from `q`.
    fn solve_slope(&self, s: f64, q: &mut [Vec<f64>], tol: f64) -> Result<SlopePoint> {
        let d = self.d;
        let (nx, nr) = (d.source_size(), d.recon_size());
        // a[x][x̂] = 2^{-s (d(x,x̂) - min_x̂ d(x,·))}
        let mut a = vec![0.0; nx * nr];
        let mut shift = vec![0.0; nx];
        for x in 0..nx {
            shift[x] = d.row_min(x);
            for xh in 0..nr {
                let excess = d.d(x, xh) - shift[x];
                a[x * nr + xh] = if s.is_infinite() {
                    if excess <= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-s * excess).exp2()
                };
            }
        }
        let mut last_gap = f64::INFINITY;
        for _ in 0..RD_MAX_INNER {
            let mut distortion = 0.0;
            let mut rate = 0.0;
            let mut intercept = 0.0;
            for ((w, p), qc) in self.classes.iter().zip(q.iter_mut()) {
                let mut new_q = vec![0.0; nr];
                let mut sum_log_lambda = 0.0;
                let mut c = vec![0.0; nr];
                for x in 0..nx {
                    if p[x] == 0.0 {
                        continue;
                    }
                    let row = &a[x * nr..(x + 1) * nr];
                    let z: f64 = row.iter().zip(qc.iter()).map(|(ai, qi)| ai * qi).sum();
                    sum_log_lambda -= p[x] * z.log2();
                    for xh in 0..nr {
                        let cond = qc[xh] * row[xh] / z;
                        if cond > 0.0 {
                            new_q[xh] += p[x] * cond;
                            distortion += w * p[x] * cond * d.d(x, xh);
                            rate += w * p[x] * cond * (row[xh] / z).log2();
                        }
                        c[xh] += p[x] * row[xh] / z;
                    }
                }
                let cmax = c.iter().cloned().fold(0.0, f64::max);
                let shifted: f64 = p.iter().zip(&shift).map(|(pi, m)| pi * m).sum();
                // bound in terms of the unshifted distortion
                let finite_s = if s.is_infinite() { 0.0 } else { s };
                intercept += w * (sum_log_lambda - cmax.log2() + finite_s * shifted);
                *qc = new_q;
            }
            let slope = if s.is_infinite() { 0.0 } else { s };
            let gap = rate - (intercept - slope * distortion);
            if gap < tol * 0.05 || (gap - last_gap).abs() < 1e-16 {
                return Ok(SlopePoint {
                    distortion,
                    rate,
                    intercept,
                    slope,
                });
            }
            last_gap = gap;
        }
        Err(Error::NotConverged {
            what: "Blahut-Arimoto rate-distortion",
            iterations: RD_MAX_INNER,
            gap: last_gap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infotheory::binary_entropy;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sample_block_examples() {
        let mut r = rng::stream(11, 0);
        let point = JointSource::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let (a, b) = point.sample_block(50, &mut r).unwrap();
        assert!(a.iter().all(|&x| x == 0) && b.iter().all(|&x| x == 1));
        let copy = JointSource::doubly_symmetric(0.0).unwrap();
        let (a, b) = copy.sample_block(1000, &mut r).unwrap();
        assert_eq!(a, b);
        let dsbs = JointSource::doubly_symmetric(0.2).unwrap();
        let (a, b) = dsbs.sample_block(100_000, &mut r).unwrap();
        let disagree = a.iter().zip(&b).filter(|(x, y)| x != y).count() as f64 / 1e5;
        assert_abs_diff_eq!(disagree, 0.2, epsilon = 0.01);
        assert!(dsbs.sample_block(0, &mut r).is_err());
    }

    #[test]
    fn avg_distortion_examples() {
        let h = DistortionMeasure::hamming(2).unwrap();
        assert_eq!(avg_distortion(&[0, 1, 1], &[0, 1, 1], &h).unwrap(), 0.0);
        assert_eq!(avg_distortion(&[0, 1, 1], &[1, 0, 0], &h).unwrap(), 1.0);
        assert_abs_diff_eq!(
            avg_distortion(&[0, 1, 0], &[0, 0, 0], &h).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert!(matches!(
            avg_distortion(&[0, 1], &[0], &h),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn binary_rate_distortion_examples() {
        let h = DistortionMeasure::hamming(2).unwrap();
        let u = [0.5, 0.5];
        assert_abs_diff_eq!(rate_distortion(&u, &h, 0.5, 1e-9).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rate_distortion(&u, &h, 0.0, 1e-9).unwrap(), 1.0, epsilon = 1e-9);
        let r = rate_distortion(&u, &h, 0.1, 1e-9).unwrap();
        assert_abs_diff_eq!(r, 1.0 - binary_entropy(0.1), epsilon = 1e-8);
    }

    #[test]
    fn skewed_source_and_infeasible_target() {
        // Bernoulli(0.2) under Hamming: R(D) = h(0.2) - h(D) for D < 0.2.
        let h = DistortionMeasure::hamming(2).unwrap();
        let p = [0.8, 0.2];
        let r = rate_distortion(&p, &h, 0.05, 1e-9).unwrap();
        assert_abs_diff_eq!(r, binary_entropy(0.2) - binary_entropy(0.05), epsilon = 1e-8);
        let shifted = DistortionMeasure::new(2, 2, vec![0.5, 1.5, 1.5, 0.5]).unwrap();
        assert!(matches!(
            rate_distortion(&p, &shifted, 0.2, 1e-9),
            Err(Error::InfeasibleDistortion { minimum, .. }) if (minimum - 0.5).abs() < 1e-12
        ));
        // Shifting every distortion by a constant shifts the curve.
        let r2 = rate_distortion(&p, &shifted, 0.55, 1e-9).unwrap();
        assert_abs_diff_eq!(r2, r, epsilon = 1e-8);
    }

    #[test]
    fn conditional_rate_distortion_of_dsbs() {
        // R_{X1|X2}(D) = h(p) - h(D) for the doubly symmetric source.
        let s = JointSource::doubly_symmetric(0.2).unwrap();
        let h = DistortionMeasure::hamming(2).unwrap();
        let r = conditional_rate_distortion(&s, &h, 0.1, 1e-9).unwrap();
        assert_abs_diff_eq!(r, binary_entropy(0.2) - binary_entropy(0.1), epsilon = 1e-8);
        assert_eq!(conditional_rate_distortion(&s, &h, 0.2, 1e-9).unwrap(), 0.0);
    }
}

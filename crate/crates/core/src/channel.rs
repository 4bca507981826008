//! Discrete memoryless channels and their Shannon capacity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::checked_cells;

/// Row sums must be within this of 1.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Blahut–Arimoto iteration cap.
pub const MAX_BA_ITERATIONS: usize = 100_000;

/// A discrete memoryless channel W(y|x), stored row-major (one row per input).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dmc {
    input_size: usize,
    output_size: usize,
    transition: Vec<f64>,
}

impl Dmc {
    pub fn new(input_size: usize, output_size: usize, transition: Vec<f64>) -> Result<Self> {
        if input_size == 0 || output_size == 0 {
            return Err(Error::NotStochastic("alphabets must be nonempty".into()));
        }
        checked_cells([input_size, output_size])?;
        if transition.len() != input_size * output_size {
            return Err(Error::ShapeMismatch {
                expected: input_size * output_size,
                got: transition.len(),
            });
        }
        for (x, row) in transition.chunks(output_size).enumerate() {
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::NotStochastic(format!("row {x} has a negative entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic(format!("row {x} sums to {s}")));
            }
        }
        Ok(Self {
            input_size,
            output_size,
            transition,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let out = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != out) {
            return Err(Error::NotStochastic("rows have different lengths".into()));
        }
        Self::new(rows.len(), out, rows.concat())
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("crossover {p} outside [0, 1]")));
        }
        Self::new(2, 2, vec![1.0 - p, p, p, 1.0 - p])
    }

    /// Binary erasure channel; outputs are (0, erasure, 1).
    pub fn bec(e: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidArgument(format!("erasure {e} outside [0, 1]")));
        }
        Self::new(2, 3, vec![1.0 - e, e, 0.0, 0.0, e, 1.0 - e])
    }

    /// Noiseless channel on `k` symbols.
    pub fn identity(k: usize) -> Result<Self> {
        let mut w = vec![0.0; k * k];
        for x in 0..k {
            w[x * k + x] = 1.0;
        }
        Self::new(k, k, w)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn output_size(&self) -> usize {
        self.output_size
    }

    /// W(y|x).
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.transition[x * self.output_size + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.transition[x * self.output_size..(x + 1) * self.output_size]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// True when every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.transition.iter().all(|&w| w == 0.0 || w == 1.0)
    }

    /// Memoryless n-fold extension; block symbols are mixed-radix with the
    /// first use most significant.
    pub fn extend(&self, n: usize) -> Result<Dmc> {
        if n == 0 {
            return Err(Error::InvalidArgument("extension order must be >= 1".into()));
        }
        let ins = checked_cells(std::iter::repeat(self.input_size).take(n))?;
        let outs = checked_cells(std::iter::repeat(self.output_size).take(n))?;
        checked_cells([ins, outs])?;
        let mut w = vec![0.0; ins * outs];
        for xb in 0..ins {
            for yb in 0..outs {
                let (mut xr, mut yr, mut p) = (xb, yb, 1.0);
                for _ in 0..n {
                    p *= self.prob(xr % self.input_size, yr % self.output_size);
                    xr /= self.input_size;
                    yr /= self.output_size;
                }
                w[xb * outs + yb] = p;
            }
        }
        Ok(Dmc {
            input_size: ins,
            output_size: outs,
            transition: w,
        })
    }

    /// Draws an output for input `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Result<usize> {
        if x >= self.input_size {
            return Err(Error::SymbolOutOfRange {
                symbol: x,
                size: self.input_size,
            });
        }
        Ok(self.sample_unchecked(x, rng))
    }

    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        sample_index(self.row(x), rng)
    }

    /// Output distribution induced by an input distribution.
    pub fn output_distribution(&self, input: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.output_size];
        for (x, &r) in input.iter().enumerate() {
            for (qy, w) in q.iter_mut().zip(self.row(x)) {
                *qy += r * w;
            }
        }
        q
    }

    /// I(X;Y) in bits for input distribution `input`.
    pub fn mutual_information(&self, input: &[f64]) -> f64 {
        let q = self.output_distribution(input);
        input
            .iter()
            .enumerate()
            .map(|(x, &r)| if r > 0.0 { r * self.divergence_to(x, &q) } else { 0.0 })
            .sum()
    }

    /// D(W(.|x) || q) in bits.
    fn divergence_to(&self, x: usize, q: &[f64]) -> f64 {
        self.row(x)
            .iter()
            .zip(q)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, qy)| w * (w / qy).log2())
            .sum()
    }

    /// Shannon capacity by Blahut–Arimoto, certified to `tol`.
    pub fn capacity(&self, tol: f64) -> Result<CapacityResult> {
        self.capacity_traced(tol).map(|(r, _)| r)
    }

    /// Like [`Dmc::capacity`], also returning the (lower, upper) bound pair
    /// at every iteration.
    pub fn capacity_traced(&self, tol: f64) -> Result<(CapacityResult, Vec<(f64, f64)>)> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {tol} must be > 0")));
        }
        let mut r = vec![1.0 / self.input_size as f64; self.input_size];
        let mut trace = Vec::new();
        let mut div = vec![0.0; self.input_size];
        for it in 1..=MAX_BA_ITERATIONS {
            let q = self.output_distribution(&r);
            for (x, d) in div.iter_mut().enumerate() {
                *d = self.divergence_to(x, &q);
            }
            let lower: f64 = r.iter().zip(&div).map(|(a, b)| a * b).sum();
            let upper = div.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            trace.push((lower, upper));
            let gap = (upper - lower).max(0.0);
            if gap < tol {
                return Ok((
                    CapacityResult {
                        capacity: lower.max(0.0),
                        optimal_input: r,
                        iterations: it,
                        gap,
                    },
                    trace,
                ));
            }
            // r(x) <- r(x) 2^{D(W_x||q)} / Z, shifted by the max for stability
            let mut z = 0.0;
            for (rx, d) in r.iter_mut().zip(&div) {
                *rx *= (d - upper).exp2();
                z += *rx;
            }
            r.iter_mut().for_each(|rx| *rx /= z);
        }
        let (lower, upper) = *trace.last().expect("at least one iteration");
        Err(Error::NotConverged {
            what: "Blahut-Arimoto capacity",
            iterations: MAX_BA_ITERATIONS,
            gap: upper - lower,
        })
    }

    /// Channel with its output symbols relabeled by `perm` (y -> perm[y]).
    pub fn permute_outputs(&self, perm: &[usize]) -> Result<Dmc> {
        if perm.len() != self.output_size {
            return Err(Error::LengthMismatch {
                left: perm.len(),
                right: self.output_size,
            });
        }
        let mut w = vec![0.0; self.transition.len()];
        for x in 0..self.input_size {
            for y in 0..self.output_size {
                w[x * self.output_size + perm[y]] = self.prob(x, y);
            }
        }
        Dmc::new(self.input_size, self.output_size, w)
    }
}

/// Draws an index from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Outcome of a capacity computation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Lower bound I(r; W) at the final input distribution; the true
    /// capacity lies in `[capacity, capacity + gap]`.
    pub capacity: f64,
    pub optimal_input: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
}

impl CapacityResult {
    pub fn upper_bound(&self) -> f64 {
        self.capacity + self.gap
    }
}

//! Exact finite-alphabet probability engine.
//!
//! A [`Pmf`] is a dense table over the cartesian product of a list of named
//! variables, stored row-major with the last variable varying fastest.
//! Entropies and (conditional) mutual informations are computed exactly by
//! marginalizing the table; all quantities are in bits.

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of cells a dense table may hold.
pub const MAX_CELLS: usize = 1 << 24;

/// A named finite random variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub size: usize,
}

impl Variable {
    pub fn new(name: impl Into<String>, size: usize) -> Self {
        Self {
            name: name.into(),
            size,
        }
    }
}

/// Checks that the product of `sizes` fits under [`MAX_CELLS`].
pub fn checked_cells<I: IntoIterator<Item = usize>>(sizes: I) -> Result<usize> {
    let mut total: u128 = 1;
    for s in sizes {
        total = total.saturating_mul(s as u128);
    }
    if total > MAX_CELLS as u128 {
        return Err(Error::TooLarge {
            required: total,
            ceiling: MAX_CELLS as u128,
        });
    }
    Ok(total as usize)
}

/// Joint probability mass function over named variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    vars: Vec<Variable>,
    mass: Vec<f64>,
}

fn check_vars(vars: &[Variable]) -> Result<usize> {
    for (i, v) in vars.iter().enumerate() {
        if v.size == 0 {
            return Err(Error::EmptyAlphabet(v.name.clone()));
        }
        if vars[..i].iter().any(|w| w.name == v.name) {
            return Err(Error::DuplicateVariable(v.name.clone()));
        }
    }
    if vars.len() > 64 {
        return Err(Error::InvalidArgument(
            "a pmf holds at most 64 variables".into(),
        ));
    }
    checked_cells(vars.iter().map(|v| v.size))
}

fn normalization_tolerance(cells: usize) -> f64 {
    1e-12_f64.max(cells as f64 * f64::EPSILON)
}

impl Pmf {
    /// Builds a pmf from a dense row-major table.
    pub fn new(vars: Vec<Variable>, mass: Vec<f64>) -> Result<Self> {
        let cells = check_vars(&vars)?;
        if mass.len() != cells {
            return Err(Error::ShapeMismatch {
                expected: cells,
                got: mass.len(),
            });
        }
        if let Some(bad) = mass.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidPmf(format!("entry {bad} is not a probability")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > normalization_tolerance(cells) {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        Ok(Self { vars, mass })
    }

    /// Builds a pmf by evaluating `f` on every assignment.
    pub fn from_fn(vars: Vec<Variable>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let cells = check_vars(&vars)?;
        let sizes: Vec<usize> = vars.iter().map(|v| v.size).collect();
        let mut digits = vec![0usize; sizes.len()];
        let mut mass = Vec::with_capacity(cells);
        for _ in 0..cells {
            mass.push(f(&digits));
            odometer_step(&mut digits, &sizes);
        }
        Self::new(vars, mass)
    }

    pub fn uniform(vars: Vec<Variable>) -> Result<Self> {
        let cells = check_vars(&vars)?;
        Self::new(vars, vec![1.0 / cells as f64; cells])
    }

    /// Independent product of two pmfs over disjoint variables.
    pub fn product(&self, other: &Pmf) -> Result<Pmf> {
        let mut vars = self.vars.clone();
        vars.extend(other.vars.iter().cloned());
        check_vars(&vars)?;
        let mut mass = Vec::with_capacity(self.mass.len() * other.mass.len());
        for &a in &self.mass {
            for &b in &other.mass {
                mass.push(a * b);
            }
        }
        Pmf::new(vars, mass)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn num_cells(&self) -> usize {
        self.mass.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.vars.iter().any(|v| v.name == name)
    }

    /// Probability of a full assignment, in variable order.
    pub fn prob(&self, assignment: &[usize]) -> f64 {
        debug_assert_eq!(assignment.len(), self.vars.len());
        let mut idx = 0;
        for (v, &a) in self.vars.iter().zip(assignment) {
            idx = idx * v.size + a;
        }
        self.mass[idx]
    }

    /// Number of cells with positive mass.
    pub fn support_size(&self) -> usize {
        self.mass.iter().filter(|&&p| p > 0.0).count()
    }

    /// Bitmask of the named variables.
    pub fn mask_of<S: AsRef<str>>(&self, names: &[S]) -> Result<u64> {
        let mut mask = 0u64;
        for n in names {
            mask |= 1 << self.index_of(n.as_ref())?;
        }
        Ok(mask)
    }

    /// Expectation of `f` over the joint law.
    pub fn expectation(&self, mut f: impl FnMut(&[usize]) -> f64) -> f64 {
        let sizes: Vec<usize> = self.vars.iter().map(|v| v.size).collect();
        let mut digits = vec![0usize; sizes.len()];
        let mut acc = 0.0;
        for &p in &self.mass {
            if p > 0.0 {
                acc += p * f(&digits);
            }
            odometer_step(&mut digits, &sizes);
        }
        acc
    }

    /// Marginal pmf over `keep`; the result lists variables in this pmf's order.
    pub fn marginalize<S: AsRef<str>>(&self, keep: &[S]) -> Result<Pmf> {
        let mask = self.mask_of(keep)?;
        let vars = self
            .vars
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, v)| v.clone())
            .collect();
        Ok(Pmf {
            vars,
            mass: self.marginal_table(mask),
        })
    }

    /// Dense marginal table for the variables selected by `mask`.
    pub fn marginal_table(&self, mask: u64) -> Vec<f64> {
        let k = self.vars.len();
        let sizes: Vec<usize> = self.vars.iter().map(|v| v.size).collect();
        let mut stride = vec![0usize; k];
        let mut len = 1usize;
        for v in (0..k).rev() {
            if mask >> v & 1 == 1 {
                stride[v] = len;
                len *= sizes[v];
            }
        }
        let mut out = vec![0.0; len];
        let mut digits = vec![0usize; k];
        let mut m = 0usize;
        for &p in &self.mass {
            out[m] += p;
            let mut v = k;
            while v > 0 {
                v -= 1;
                digits[v] += 1;
                m += stride[v];
                if digits[v] < sizes[v] {
                    break;
                }
                m -= stride[v] * sizes[v];
                digits[v] = 0;
            }
        }
        out
    }

    /// Joint entropy of the variables selected by `mask`, in bits.
    pub fn entropy_mask(&self, mask: u64) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        entropy_of(&self.marginal_table(mask))
    }

    /// Joint entropy H(over), in bits.
    pub fn entropy<S: AsRef<str>>(&self, over: &[S]) -> Result<f64> {
        if over.is_empty() {
            return Err(Error::EmptyVariableSet);
        }
        Ok(self.entropy_mask(self.mask_of(over)?))
    }

    /// I(left; right | given), in bits.
    pub fn mutual_information(&self, q: &MiQuery) -> Result<f64> {
        let (l, r, g) = q.masks(self)?;
        Ok(mi_from(|m| self.entropy_mask(m), l, r, g))
    }
}

/// I(L;R|G) = H(L,G) + H(R,G) - H(L,R,G) - H(G).
fn mi_from(mut h: impl FnMut(u64) -> f64, l: u64, r: u64, g: u64) -> f64 {
    h(l | g) + h(r | g) - h(l | r | g) - h(g)
}

/// Shannon entropy of a (sub)probability vector in bits, with 0 log 0 = 0.
pub fn entropy_of(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.log2())
        .sum::<f64>()
}

/// Binary entropy function in bits.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_of(&[p, 1.0 - p])
}

/// Advances a mixed-radix odometer (last digit fastest).
pub(crate) fn odometer_step(digits: &mut [usize], sizes: &[usize]) {
    for v in (0..digits.len()).rev() {
        digits[v] += 1;
        if digits[v] < sizes[v] {
            return;
        }
        digits[v] = 0;
    }
}

/// A conditional mutual information query I(left; right | given).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MiQuery {
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub given: Vec<String>,
}

impl MiQuery {
    pub fn new<S: AsRef<str>>(left: &[S], right: &[S], given: &[S]) -> Self {
        let own = |s: &[S]| s.iter().map(|x| x.as_ref().to_string()).collect();
        Self {
            left: own(left),
            right: own(right),
            given: own(given),
        }
    }

    /// Unconditional I(left; right).
    pub fn pair<S: AsRef<str>>(left: &[S], right: &[S]) -> Self {
        Self::new(left, right, &[])
    }

    fn masks(&self, p: &Pmf) -> Result<(u64, u64, u64)> {
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::EmptyVariableSet);
        }
        for name in &self.left {
            if self.right.contains(name) || self.given.contains(name) {
                return Err(Error::OverlappingSets(name.clone()));
            }
        }
        for name in &self.right {
            if self.given.contains(name) {
                return Err(Error::OverlappingSets(name.clone()));
            }
        }
        Ok((
            p.mask_of(&self.left)?,
            p.mask_of(&self.right)?,
            p.mask_of(&self.given)?,
        ))
    }
}

/// Memoizing evaluator for many information quantities over one pmf.
///
/// Joint entropies are cached by variable mask, so long chains of
/// conditional mutual informations reuse each marginalization.
pub struct InfoEngine<'a> {
    pmf: &'a Pmf,
    cache: RefCell<HashMap<u64, f64>>,
}

impl<'a> InfoEngine<'a> {
    pub fn new(pmf: &'a Pmf) -> Self {
        Self {
            pmf,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn pmf(&self) -> &Pmf {
        self.pmf
    }

    pub fn entropy_mask(&self, mask: u64) -> f64 {
        if let Some(&h) = self.cache.borrow().get(&mask) {
            return h;
        }
        let h = self.pmf.entropy_mask(mask);
        self.cache.borrow_mut().insert(mask, h);
        h
    }

    pub fn mi(&self, q: &MiQuery) -> Result<f64> {
        let (l, r, g) = q.masks(self.pmf)?;
        Ok(mi_from(|m| self.entropy_mask(m), l, r, g))
    }

    /// Shorthand for `mi(&MiQuery::new(left, right, given))`.
    pub fn cmi<S: AsRef<str>>(&self, left: &[S], right: &[S], given: &[S]) -> Result<f64> {
        self.mi(&MiQuery::new(left, right, given))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bits(names: &[&str]) -> Vec<Variable> {
        names.iter().map(|n| Variable::new(*n, 2)).collect()
    }

    #[test]
    fn marginal_of_independent_uniform_bits() {
        let p = Pmf::uniform(bits(&["A", "B"])).unwrap();
        let a = p.marginalize(&["A"]).unwrap();
        assert_eq!(a.mass(), &[0.5, 0.5]);
        assert_eq!(p.marginalize(&["A", "B"]).unwrap(), p);
    }

    #[test]
    fn marginal_of_copy_pair() {
        let p = Pmf::new(bits(&["X", "Y"]), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_eq!(p.marginalize(&["X"]).unwrap().mass(), &[0.5, 0.5]);
    }

    #[test]
    fn marginalize_unknown_variable_is_named() {
        let p = Pmf::uniform(bits(&["A"])).unwrap();
        assert_eq!(
            p.marginalize(&["Z"]).unwrap_err(),
            Error::UnknownVariable("Z".into())
        );
    }

    #[test]
    fn entropy_examples() {
        let u = Pmf::uniform(bits(&["A"])).unwrap();
        assert_abs_diff_eq!(u.entropy(&["A"]).unwrap(), 1.0, epsilon = 1e-15);
        let det = Pmf::new(bits(&["A"]), vec![1.0, 0.0]).unwrap();
        assert_eq!(det.entropy(&["A"]).unwrap(), 0.0);
        let skew = Pmf::new(bits(&["A"]), vec![0.1, 0.9]).unwrap();
        // -0.1 log2 0.1 - 0.9 log2 0.9
        let h = -(0.1f64 * 0.1f64.log2()) - 0.9 * 0.9f64.log2();
        assert_abs_diff_eq!(skew.entropy(&["A"]).unwrap(), h, epsilon = 1e-15);
        assert_abs_diff_eq!(h, 0.468995593589281, epsilon = 1e-12);
        assert_eq!(
            u.entropy::<&str>(&[]).unwrap_err(),
            Error::EmptyVariableSet
        );
    }

    #[test]
    fn mutual_information_examples() {
        let ind = Pmf::uniform(bits(&["A", "B"])).unwrap();
        assert_abs_diff_eq!(
            ind.mutual_information(&MiQuery::pair(&["A"], &["B"])).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        let copy = Pmf::new(bits(&["A", "B"]), vec![0.5, 0.0, 0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(
            copy.mutual_information(&MiQuery::pair(&["A"], &["B"])).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(
            copy.mutual_information(&MiQuery::new(&["A"], &["B"], &["A"]))
                .unwrap_err(),
            Error::OverlappingSets("A".into())
        );
    }

    #[test]
    fn product_of_k_uniform_bits_has_entropy_k() {
        let names: Vec<String> = (0..10).map(|i| format!("B{i}")).collect();
        let vars = names.iter().map(|n| Variable::new(n.clone(), 2)).collect();
        let p = Pmf::uniform(vars).unwrap();
        assert_abs_diff_eq!(p.entropy(&names).unwrap(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn validation() {
        assert!(matches!(
            Pmf::new(bits(&["A"]), vec![0.7, 0.7]),
            Err(Error::InvalidPmf(_))
        ));
        assert!(matches!(
            Pmf::new(bits(&["A"]), vec![-0.5, 1.5]),
            Err(Error::InvalidPmf(_))
        ));
        assert!(matches!(
            Pmf::new(bits(&["A", "A"]), vec![0.25; 4]),
            Err(Error::DuplicateVariable(_))
        ));
        assert!(matches!(
            Pmf::new(vec![Variable::new("A", 0)], vec![]),
            Err(Error::EmptyAlphabet(_))
        ));
        let huge = vec![Variable::new("A", 1 << 13), Variable::new("B", 1 << 12)];
        assert!(matches!(Pmf::uniform(huge), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn engine_matches_direct_evaluation() {
        let p = Pmf::from_fn(bits(&["A", "B", "C"]), |d| {
            [0.1, 0.2, 0.05, 0.15, 0.12, 0.08, 0.2, 0.1][d[0] * 4 + d[1] * 2 + d[2]]
        })
        .unwrap();
        let e = InfoEngine::new(&p);
        let q = MiQuery::new(&["A"], &["B"], &["C"]);
        assert_eq!(e.mi(&q).unwrap(), p.mutual_information(&q).unwrap());
        assert_eq!(e.mi(&q).unwrap(), e.cmi(&["A"], &["B"], &["C"]).unwrap());
    }
}

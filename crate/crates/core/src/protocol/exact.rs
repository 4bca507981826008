//! Exact analysis by enumerating every source block and channel output
//! sequence of positive probability.

use std::collections::BTreeSet;

use super::exec::ExecutionTrace;
use super::{pack, DecoderPart, GeneralCode, Tap, User};
use crate::channel::Dmc;
use crate::error::{Error, Result};
use crate::infotheory::{Pmf, Variable, MAX_CELLS};
use crate::source::{DistortionMeasure, JointSource};

/// Name of the reconstruction of X1 in [`exact_joint`].
pub const JOINT_RECON1: &str = "Xhat1";
/// Name of the reconstruction of X2 in [`exact_joint`].
pub const JOINT_RECON2: &str = "Xhat2";

/// Upper bound on enumerated branches for one exact evaluation.
const MAX_BRANCHES: u128 = 1 << 30;

/// The part of a code that has to be simulated: source positions and the
/// active slots per user.
struct Scope {
    positions: Vec<usize>,
    slots1: Vec<bool>,
    slots2: Vec<bool>,
}

impl Scope {
    fn everything(code: &GeneralCode) -> Self {
        Self {
            positions: (0..code.n).collect(),
            slots1: code.schedule.c1.clone(),
            slots2: code.schedule.c2.clone(),
        }
    }

    /// Everything `user`'s `taps` depend on, plus `positions`.
    fn ancestors(code: &GeneralCode, user: User, taps: &[Tap], positions: &[usize]) -> Self {
        let horizon = code.horizon();
        let mut pos: BTreeSet<usize> = positions.iter().copied().collect();
        let mut slots1 = vec![false; horizon];
        let mut slots2 = vec![false; horizon];
        let mut stack: Vec<(User, Tap)> = taps.iter().map(|&t| (user, t)).collect();
        while let Some((u, t)) = stack.pop() {
            let (owner, j) = match t {
                Tap::Source(p) => {
                    pos.insert(p);
                    continue;
                }
                Tap::Sent(j) => (u, j),
                Tap::Received(j) => (u.other(), j),
            };
            let seen = match owner {
                User::One => &mut slots1[j],
                User::Two => &mut slots2[j],
            };
            if *seen {
                continue;
            }
            *seen = true;
            if let Some(l) = &code.encoders(owner)[j] {
                stack.extend(l.taps.iter().map(|&t| (owner, t)));
            }
        }
        Self {
            positions: pos.into_iter().collect(),
            slots1,
            slots2,
        }
    }

    fn branch_bound(&self, source_support: usize, ch1: &Dmc, ch2: &Dmc) -> u128 {
        let mut b: u128 = 1;
        for _ in &self.positions {
            b = b.saturating_mul(source_support as u128);
        }
        let fan = |ch: &Dmc| -> u128 {
            (0..ch.input_size())
                .map(|x| ch.row(x).iter().filter(|&&w| w > 0.0).count())
                .max()
                .unwrap_or(1) as u128
        };
        for (on, ch) in [(&self.slots1, ch1), (&self.slots2, ch2)] {
            for _ in on.iter().filter(|&&a| a) {
                b = b.saturating_mul(fan(ch));
            }
        }
        b
    }
}

struct Enumerator<'a, F> {
    code: &'a GeneralCode,
    ch1: &'a Dmc,
    ch2: &'a Dmc,
    pairs: Vec<(usize, usize, f64)>,
    scope: &'a Scope,
    trace: ExecutionTrace,
    leaf: F,
}

impl<F: FnMut(f64, &ExecutionTrace) -> Result<()>> Enumerator<'_, F> {
    fn sources(&mut self, k: usize, prob: f64) -> Result<()> {
        if k == self.scope.positions.len() {
            return self.slot(0, prob);
        }
        let pos = self.scope.positions[k];
        for i in 0..self.pairs.len() {
            let (a, b, p) = self.pairs[i];
            self.trace.x1[pos] = a;
            self.trace.x2[pos] = b;
            self.sources(k + 1, prob * p)?;
        }
        Ok(())
    }

    fn slot(&mut self, i: usize, prob: f64) -> Result<()> {
        if i == self.code.horizon() {
            return (self.leaf)(prob, &self.trace);
        }
        let u1 = if self.scope.slots1[i] {
            self.code.encode(User::One, i, &self.trace)?
        } else {
            None
        };
        let u2 = if self.scope.slots2[i] {
            self.code.encode(User::Two, i, &self.trace)?
        } else {
            None
        };
        let outs = |u: Option<usize>, ch: &Dmc| -> Vec<(Option<usize>, f64)> {
            match u {
                Some(u) => ch
                    .row(u)
                    .iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(y, &w)| (Some(y), w))
                    .collect(),
                None => vec![(None, 1.0)],
            }
        };
        let o1 = outs(u1, self.ch1);
        let o2 = outs(u2, self.ch2);
        self.trace.u1[i] = u1;
        self.trace.u2[i] = u2;
        for &(v1, w1) in &o1 {
            for &(v2, w2) in &o2 {
                self.trace.v1[i] = v1;
                self.trace.v2[i] = v2;
                self.slot(i + 1, prob * w1 * w2)?;
            }
        }
        Ok(())
    }
}

fn enumerate<F: FnMut(f64, &ExecutionTrace) -> Result<()>>(
    code: &GeneralCode,
    source: &JointSource,
    ch1: &Dmc,
    ch2: &Dmc,
    scope: &Scope,
    leaf: F,
) -> Result<()> {
    let mut pairs = Vec::new();
    for a in 0..source.size1() {
        for b in 0..source.size2() {
            let p = source.prob(a, b);
            if p > 0.0 {
                pairs.push((a, b, p));
            }
        }
    }
    let bound = scope.branch_bound(pairs.len(), ch1, ch2);
    if bound > MAX_BRANCHES {
        return Err(Error::TooLarge {
            required: bound,
            ceiling: MAX_BRANCHES,
        });
    }
    let mut e = Enumerator {
        code,
        ch1,
        ch2,
        pairs,
        scope,
        trace: ExecutionTrace::start(vec![0; code.n], vec![0; code.n], code.horizon()),
        leaf,
    };
    e.sources(0, 1.0)
}

fn block_size(radix: usize, len: usize) -> Result<usize> {
    (radix as u128)
        .checked_pow(len as u32)
        .filter(|&s| s <= MAX_CELLS as u128)
        .map(|s| s as usize)
        .ok_or(Error::TooLarge {
            required: u128::MAX,
            ceiling: MAX_CELLS as u128,
        })
}

/// Exact joint pmf of `(X1, X2, V1, ..., Vq, Xhat1, Xhat2)` for a code with
/// staggered schedule. `Vk` is the block of channel outputs of round `k`
/// (mixed radix, first slot most significant); the sources and
/// reconstructions are whole blocks.
pub fn exact_joint(code: &GeneralCode, source: &JointSource, ch1: &Dmc, ch2: &Dmc) -> Result<Pmf> {
    code.check_compatible(source, ch1, ch2)?;
    let rounds = code.rounds()?;
    let a = &code.alphabets;
    let n = code.n;
    let mut vars = vec![
        Variable::new("X1", block_size(a.source1, n)?),
        Variable::new("X2", block_size(a.source2, n)?),
    ];
    for (k, &(user, _, len)) in rounds.iter().enumerate() {
        let out = match user {
            User::One => a.output1,
            User::Two => a.output2,
        };
        vars.push(Variable::new(format!("V{}", k + 1), block_size(out, len)?));
    }
    vars.push(Variable::new(JOINT_RECON1, block_size(a.recon1, n)?));
    vars.push(Variable::new(JOINT_RECON2, block_size(a.recon2, n)?));
    let cells = crate::infotheory::checked_cells(vars.iter().map(|v| v.size))?;
    let sizes: Vec<usize> = vars.iter().map(|v| v.size).collect();
    let mut mass = vec![0.0; cells];
    let scope = Scope::everything(code);
    let mut digits = vec![0usize; vars.len()];
    let mut trace_buf = ExecutionTrace::start(vec![0; n], vec![0; n], code.horizon());
    enumerate(code, source, ch1, ch2, &scope, |p, t| {
        trace_buf.clone_from(t);
        code.decode_all(&mut trace_buf)?;
        digits[0] = pack(&trace_buf.x1, a.source1);
        digits[1] = pack(&trace_buf.x2, a.source2);
        for (k, &(user, start, len)) in rounds.iter().enumerate() {
            let (vs, radix) = match user {
                User::One => (&trace_buf.v1, a.output1),
                User::Two => (&trace_buf.v2, a.output2),
            };
            digits[2 + k] = vs[start..start + len]
                .iter()
                .fold(0, |acc, v| acc * radix + v.expect("active slot"));
        }
        let q = rounds.len();
        digits[2 + q] = pack(&trace_buf.xhat1, a.recon1);
        digits[3 + q] = pack(&trace_buf.xhat2, a.recon2);
        let idx = digits.iter().zip(&sizes).fold(0, |acc, (d, s)| acc * s + d);
        mass[idx] += p;
        Ok(())
    })?;
    Pmf::new(vars, mass)
}

fn part_distortion(
    code: &GeneralCode,
    source: &JointSource,
    ch1: &Dmc,
    ch2: &Dmc,
    user: User,
    part: &DecoderPart,
    d: &DistortionMeasure,
) -> Result<f64> {
    let scope = Scope::ancestors(code, user, &part.taps, &part.positions);
    let mut out = vec![0usize; code.n];
    let mut total = 0.0;
    enumerate(code, source, ch1, ch2, &scope, |p, t| {
        code.decode_part(user, part, t, &mut out)?;
        let truth = match user {
            User::Two => &t.x1,
            User::One => &t.x2,
        };
        total += p * part
            .positions
            .iter()
            .map(|&i| d.d(truth[i], out[i]))
            .sum::<f64>();
        Ok(())
    })?;
    Ok(total)
}

/// Exact expected per-letter distortions `(D1, D2)` of any valid code.
/// Each decoder part is evaluated over only the positions and slots it
/// depends on, so repetition-lifted codes cost no more than the original.
pub fn exact_distortions(
    code: &GeneralCode,
    source: &JointSource,
    ch1: &Dmc,
    ch2: &Dmc,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
) -> Result<(f64, f64)> {
    code.check_compatible(source, ch1, ch2)?;
    let a = &code.alphabets;
    if d1.source_size() != a.source1 || d1.recon_size() != a.recon1 {
        return Err(Error::AlphabetMismatch("distortion measure 1".into()));
    }
    if d2.source_size() != a.source2 || d2.recon_size() != a.recon2 {
        return Err(Error::AlphabetMismatch("distortion measure 2".into()));
    }
    let mut sum1 = 0.0;
    for part in &code.estimate_x1.parts {
        sum1 += part_distortion(code, source, ch1, ch2, User::Two, part, d1)?;
    }
    let mut sum2 = 0.0;
    for part in &code.estimate_x2.parts {
        sum2 += part_distortion(code, source, ch1, ch2, User::One, part, d2)?;
    }
    Ok((sum1 / code.n as f64, sum2 / code.n as f64))
}

#[cfg(test)]
mod tests {
    use super::super::{random_staggered, Alphabets};
    use super::*;
    use crate::infotheory::MiQuery;
    use crate::rng;

    #[test]
    fn joint_has_product_source_marginal_and_matches_distortions() {
        let mut r = rng::stream(3, 0);
        let code = random_staggered(2, &[1, 1, 1, 1], Alphabets::binary(), &mut r)
            .unwrap()
            .to_general()
            .unwrap();
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        let ch = Dmc::bsc(0.1).unwrap();
        let joint = exact_joint(&code, &src, &ch, &ch).unwrap();
        let x = joint.marginalize(&["X1", "X2"]).unwrap();
        for b1 in 0..4 {
            for b2 in 0..4 {
                let want: f64 = (0..2)
                    .map(|i| src.prob((b1 >> (1 - i)) & 1, (b2 >> (1 - i)) & 1))
                    .product();
                assert!((x.prob(&[b1, b2]) - want).abs() < 1e-12);
            }
        }
        // reconstructions are functions of the terminal histories
        let h = joint
            .mutual_information(&MiQuery::new(&["Xhat1"], &["X1"], &["X2", "V1", "V2", "V3", "V4"]))
            .unwrap();
        assert!(h.abs() < 1e-10);

        let ham = DistortionMeasure::hamming(2).unwrap();
        let (d1, d2) = exact_distortions(&code, &src, &ch, &ch, &ham, &ham).unwrap();
        let e1 = joint.expectation(|v| {
            let (x, xh) = (v[0], v[6]);
            ((x ^ xh) as u32).count_ones() as f64 / 2.0
        });
        let e2 = joint.expectation(|v| {
            let (x, xh) = (v[1], v[7]);
            ((x ^ xh) as u32).count_ones() as f64 / 2.0
        });
        assert!((d1 - e1).abs() < 1e-12);
        assert!((d2 - e2).abs() < 1e-12);
    }

    #[test]
    fn joint_rejects_simultaneous_schedules() {
        let mut r = rng::stream(1, 0);
        let code = super::super::random_general(
            &super::super::GeneralCodeParams {
                n: 1,
                horizon: 2,
                alphabets: Alphabets::binary(),
                simultaneous: true,
            },
            &mut r,
        )
        .unwrap();
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        let ch = Dmc::bsc(0.1).unwrap();
        assert!(matches!(
            exact_joint(&code, &src, &ch, &ch),
            Err(Error::NotStaggered(_))
        ));
        assert!(exact_distortions(
            &code,
            &src,
            &ch,
            &ch,
            &DistortionMeasure::hamming(2).unwrap(),
            &DistortionMeasure::hamming(2).unwrap()
        )
        .is_ok());
    }
}

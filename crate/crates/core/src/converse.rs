//! Numerical verification of the converse chain on exact joint laws.
//!
//! For a staggered code with `q` rounds the chain is generated round pair
//! by round pair. For even `k` write
//!
//! * `A1 = (X1, V2, V4, ..., V_{k-2})`, everything User 1 knows before
//!   round `k-1`;
//! * `A2 = (X2, V1, V3, ..., V_{k-3})`, likewise for User 2;
//! * `B = (A2, V_{k-1})`, what User 2 knows before round `k`.
//!
//! With `k = 2` these reduce to `A1 = X1`, `A2 = X2`. Every check carries a
//! label `<step>-C1[k]` or `<step>-C2[k]`, naming the channel whose uses
//! are being bounded:
//!
//! | step | C1 side | C2 side |
//! |---|---|---|
//! | `dp` | `n_{k-1} C1 >= I(A1; V_{k-1})` | `n_k C2 >= I(B; V_k)` |
//! | `markov` | `I(A2; V_{k-1} \| A1) = 0` | `I(A1; V_k \| B) = 0` |
//! | `lemma` | three-term sum `>= I(A1; V_{k-1}, V_k \| A2)` | three-term sum `>= I(A2; V_{k-1}, V_k \| A1)` |
//! | `identity` | sum minus right side `= I(A2; V_{k-1})` | sum minus right side `= I(A1, V_{k-1}; V_k)` |
//! | `round` | `n_{k-1} C1 >= I(A1; V_{k-1}, V_k \| A2)` | `n_k C2 >= I(A2; V_{k-1}, V_k \| A1)` |
//! | `drop` (k >= 4) | `I(X1; V^{k-2} \| X2) + I(A1; V_{k-1}, V_k \| A2) >= I(X1; V^k \| X2)` | twin |
//! | `cumulative` | `(n_1 + n_3 + ... + n_{k-1}) C1 >= I(X1; V^k \| X2)` | `(n_2 + ... + n_k) C2 >= I(X2; V^k \| X1)` |
//!
//! and finally `final-C1`, `final-C2`: the cumulative bounds at `k = q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{InfoEngine, Pmf};

/// Slack tolerance for inequalities and equalities.
pub const SLACK_TOL: f64 = 1e-9;
/// Largest value a vanishing quantity may take.
pub const VANISH_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `lhs >= rhs`.
    Inequality,
    /// `lhs == rhs`.
    Equality,
    /// `lhs == 0`; `rhs` is always 0.
    Vanishing,
}

/// One verified step of the chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub label: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(label: String, kind: CheckKind, lhs: f64, rhs: f64) -> Self {
        let slack = lhs - rhs;
        let holds = match kind {
            CheckKind::Inequality => slack >= -SLACK_TOL,
            CheckKind::Equality => slack.abs() < SLACK_TOL,
            CheckKind::Vanishing => lhs <= VANISH_TOL,
        };
        Self {
            label,
            kind,
            lhs,
            rhs,
            slack,
            holds,
        }
    }

    /// `label,lhs,rhs,slack` with round-trip float formatting.
    pub fn csv_record(&self) -> String {
        format!("{},{:?},{:?},{:?}", self.label, self.lhs, self.rhs, self.slack)
    }
}

/// All checks for one code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConverseReport {
    pub round_lengths: Vec<usize>,
    pub c1: f64,
    pub c2: f64,
    pub checks: Vec<InequalityCheck>,
}

impl ConverseReport {
    pub fn holds(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn violations(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| !c.holds).collect()
    }

    pub fn get(&self, label: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.label == label)
    }

    /// Channel uses per direction.
    pub fn uses(&self) -> (usize, usize) {
        let mut u = (0, 0);
        for (k, &n) in self.round_lengths.iter().enumerate() {
            if k % 2 == 0 {
                u.0 += n
            } else {
                u.1 += n
            }
        }
        u
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,lhs,rhs,slack\n");
        for c in &self.checks {
            s.push_str(&c.csv_record());
            s.push('\n');
        }
        s
    }
}

fn v(k: usize) -> String {
    format!("V{k}")
}

fn set(base: &str, rounds: impl Iterator<Item = usize>) -> Vec<String> {
    std::iter::once(base.to_string()).chain(rounds.map(v)).collect()
}

/// `A1`, `A2` for round pair `k`.
fn knowledge(k: usize) -> (Vec<String>, Vec<String>) {
    let a1 = set("X1", (2..k - 1).step_by(2));
    let a2 = set("X2", (1..k.saturating_sub(2)).step_by(2));
    (a1, a2)
}

fn join(a: &[String], b: &[String]) -> Vec<String> {
    a.iter().chain(b).cloned().collect()
}

/// Number of rounds present as `V1, V2, ...` in `joint`.
fn rounds_in(joint: &Pmf) -> usize {
    (1..).take_while(|&k| joint.has_variable(&v(k))).count()
}

fn require(joint: &Pmf, q: usize) -> Result<()> {
    let mut missing: Vec<String> = ["X1", "X2"]
        .iter()
        .map(|s| s.to_string())
        .filter(|n| !joint.has_variable(n))
        .collect();
    missing.extend((1..=q).map(v).filter(|n| !joint.has_variable(n)));
    if !missing.is_empty() {
        return Err(Error::UnknownVariable(missing.join(", ")));
    }
    if q < 2 || q % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "round count must be even and >= 2, got {q}"
        )));
    }
    Ok(())
}

/// Restricts to `(X1, X2, V1..Vq)` so entropies skip the reconstructions.
fn core_marginal(joint: &Pmf, q: usize) -> Result<Pmf> {
    let keep: Vec<String> = ["X1".to_string(), "X2".to_string()]
        .into_iter()
        .chain((1..=q).map(v))
        .collect();
    joint.marginalize(&keep)
}

struct Chain<'a> {
    e: InfoEngine<'a>,
    out: Vec<InequalityCheck>,
}

impl Chain<'_> {
    fn mi(&self, l: &[String], r: &[String], g: &[String]) -> Result<f64> {
        self.e.cmi(l, r, g)
    }

    fn push(&mut self, label: String, kind: CheckKind, lhs: f64, rhs: f64) {
        self.out.push(InequalityCheck::new(label, kind, lhs, rhs));
    }

    fn markov(&mut self, k: usize) -> Result<()> {
        let (a1, a2) = knowledge(k);
        let b = join(&a2, &[v(k - 1)]);
        let m1 = self.mi(&a2, &[v(k - 1)], &a1)?;
        let m2 = self.mi(&a1, &[v(k)], &b)?;
        self.push(format!("markov-C1[{k}]"), CheckKind::Vanishing, m1, 0.0);
        self.push(format!("markov-C2[{k}]"), CheckKind::Vanishing, m2, 0.0);
        Ok(())
    }

    /// Lemma sums and their identities for both sides of pair `k`.
    fn lemmas(&mut self, k: usize, with_lemma: bool) -> Result<()> {
        let (a1, a2) = knowledge(k);
        let vk1 = [v(k - 1)];
        let vk = [v(k)];
        let pair = [v(k - 1), v(k)];
        let b = join(&a2, &vk1);
        let markov1 = self.mi(&a2, &vk1, &a1)?;
        let markov2 = self.mi(&a1, &vk, &b)?;

        let sum1 = self.mi(&a1, &vk1, &[])? + markov1 + markov2;
        let rhs1 = self.mi(&a1, &pair, &a2)?;
        let id1 = self.mi(&a2, &vk1, &[])?;
        let sum2 = self.mi(&b, &vk, &[])? + markov2 + markov1;
        let rhs2 = self.mi(&a2, &pair, &a1)?;
        let id2 = self.mi(&join(&a1, &vk1), &vk, &[])?;
        if with_lemma {
            self.push(format!("lemma-C1[{k}]"), CheckKind::Inequality, sum1, rhs1);
        }
        self.push(format!("identity-C1[{k}]"), CheckKind::Equality, sum1 - rhs1, id1);
        if with_lemma {
            self.push(format!("lemma-C2[{k}]"), CheckKind::Inequality, sum2, rhs2);
        }
        self.push(format!("identity-C2[{k}]"), CheckKind::Equality, sum2 - rhs2, id2);
        Ok(())
    }
}

/// Full chain for a `q`-round code; `round_lengths[k-1]` is `n_k`.
pub fn check_round_bounds(
    joint: &Pmf,
    round_lengths: &[usize],
    c1: f64,
    c2: f64,
) -> Result<ConverseReport> {
    let q = round_lengths.len();
    require(joint, q)?;
    let core = core_marginal(joint, q)?;
    let mut ch = Chain {
        e: InfoEngine::new(&core),
        out: Vec::new(),
    };
    let x1 = ["X1".to_string()];
    let x2 = ["X2".to_string()];
    let mut prev1 = 0.0;
    let mut prev2 = 0.0;
    let (mut uses1, mut uses2) = (0usize, 0usize);
    for k in (2..=q).step_by(2) {
        let (a1, a2) = knowledge(k);
        let n_odd = round_lengths[k - 2] as f64;
        let n_even = round_lengths[k - 1] as f64;
        uses1 += round_lengths[k - 2];
        uses2 += round_lengths[k - 1];
        let pair = [v(k - 1), v(k)];
        let b = join(&a2, &[v(k - 1)]);

        let dp1 = ch.mi(&a1, &[v(k - 1)], &[])?;
        ch.push(format!("dp-C1[{k}]"), CheckKind::Inequality, n_odd * c1, dp1);
        let dp2 = ch.mi(&b, &[v(k)], &[])?;
        ch.push(format!("dp-C2[{k}]"), CheckKind::Inequality, n_even * c2, dp2);
        ch.markov(k)?;
        ch.lemmas(k, true)?;

        let r1 = ch.mi(&a1, &pair, &a2)?;
        let r2 = ch.mi(&a2, &pair, &a1)?;
        ch.push(format!("round-C1[{k}]"), CheckKind::Inequality, n_odd * c1, r1);
        ch.push(format!("round-C2[{k}]"), CheckKind::Inequality, n_even * c2, r2);

        let upto: Vec<String> = (1..=k).map(v).collect();
        let cum1 = ch.mi(&x1, &upto, &x2)?;
        let cum2 = ch.mi(&x2, &upto, &x1)?;
        if k >= 4 {
            ch.push(format!("drop-C1[{k}]"), CheckKind::Inequality, prev1 + r1, cum1);
            ch.push(format!("drop-C2[{k}]"), CheckKind::Inequality, prev2 + r2, cum2);
        }
        ch.push(
            format!("cumulative-C1[{k}]"),
            CheckKind::Inequality,
            uses1 as f64 * c1,
            cum1,
        );
        ch.push(
            format!("cumulative-C2[{k}]"),
            CheckKind::Inequality,
            uses2 as f64 * c2,
            cum2,
        );
        prev1 = cum1;
        prev2 = cum2;
    }
    ch.push("final-C1".into(), CheckKind::Inequality, uses1 as f64 * c1, prev1);
    ch.push("final-C2".into(), CheckKind::Inequality, uses2 as f64 * c2, prev2);
    Ok(ConverseReport {
        round_lengths: round_lengths.to_vec(),
        c1,
        c2,
        checks: ch.out,
    })
}

/// The two identity equalities for every round pair present in `joint`.
pub fn check_identity_lemmas(joint: &Pmf) -> Result<Vec<InequalityCheck>> {
    let q = rounds_in(joint) / 2 * 2;
    require(joint, q)?;
    let core = core_marginal(joint, q)?;
    let mut ch = Chain {
        e: InfoEngine::new(&core),
        out: Vec::new(),
    };
    for k in (2..=q).step_by(2) {
        ch.lemmas(k, false)?;
    }
    Ok(ch.out)
}

/// The conditional independences implied by execution order, for every
/// round pair up to `q`.
pub fn check_markov_structure(joint: &Pmf, q: usize) -> Result<Vec<InequalityCheck>> {
    require(joint, q)?;
    let core = core_marginal(joint, q)?;
    let mut ch = Chain {
        e: InfoEngine::new(&core),
        out: Vec::new(),
    };
    for k in (2..=q).step_by(2) {
        ch.markov(k)?;
    }
    Ok(ch.out)
}

/// Labels `check_round_bounds` produces for `q` rounds, in order.
pub fn expected_labels(q: usize) -> Vec<String> {
    let mut out = Vec::new();
    for k in (2..=q).step_by(2) {
        for step in ["dp", "markov", "lemma-identity", "round", "drop", "cumulative"] {
            match step {
                "lemma-identity" => {
                    for s in ["lemma-C1", "identity-C1", "lemma-C2", "identity-C2"] {
                        out.push(format!("{s}[{k}]"));
                    }
                }
                "drop" if k < 4 => {}
                _ => {
                    out.push(format!("{step}-C1[{k}]"));
                    out.push(format!("{step}-C2[{k}]"));
                }
            }
        }
    }
    out.push("final-C1".into());
    out.push("final-C2".into());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Dmc;
    use crate::protocol::{exact_joint, random_staggered, Alphabets};
    use crate::rng;
    use crate::source::JointSource;

    fn joint_for(seed: u64, rounds: &[usize], ch: &Dmc) -> Pmf {
        let mut r = rng::stream(seed, 0);
        let code = random_staggered(1, rounds, Alphabets::binary(), &mut r)
            .unwrap()
            .to_general()
            .unwrap();
        let src = JointSource::doubly_symmetric(0.2).unwrap();
        exact_joint(&code, &src, ch, ch).unwrap()
    }

    #[test]
    fn knowledge_sets() {
        assert_eq!(knowledge(2), (vec!["X1".into()], vec!["X2".into()]));
        let (a1, a2) = knowledge(6);
        assert_eq!(a1, vec!["X1", "V2", "V4"]);
        assert_eq!(a2, vec!["X2", "V1", "V3"]);
    }

    #[test]
    fn q2_random_code_satisfies_chain() {
        let ch = Dmc::bsc(0.1).unwrap();
        let c = ch.capacity(1e-9).unwrap().capacity;
        for seed in 0..20 {
            let joint = joint_for(seed, &[1, 1], &ch);
            let rep = check_round_bounds(&joint, &[1, 1], c, c).unwrap();
            assert!(rep.holds(), "{:?}", rep.violations());
            let labels: Vec<_> = rep.checks.iter().map(|c| c.label.clone()).collect();
            assert_eq!(labels, expected_labels(2));
        }
    }

    #[test]
    fn q4_chain_and_identities() {
        let ch = Dmc::bsc(0.1).unwrap();
        let c = ch.capacity(1e-9).unwrap().capacity;
        let joint = joint_for(7, &[1, 1, 1, 1], &ch);
        let rep = check_round_bounds(&joint, &[1, 1, 1, 1], c, c).unwrap();
        assert!(rep.holds(), "{:?}", rep.violations());
        assert_eq!(rep.checks.len(), expected_labels(4).len());
        let ids = check_identity_lemmas(&joint).unwrap();
        assert_eq!(ids.len(), 4);
        assert!(ids.iter().all(|c| c.holds));
        let m = check_markov_structure(&joint, 4).unwrap();
        assert!(m.iter().all(|c| c.lhs.abs() <= VANISH_TOL));
    }

    #[test]
    fn missing_variables_are_named() {
        let ch = Dmc::bsc(0.1).unwrap();
        let joint = joint_for(1, &[1, 1], &ch);
        let err = check_round_bounds(&joint, &[1, 1, 1, 1], 1.0, 1.0).unwrap_err();
        assert_eq!(err, Error::UnknownVariable("V3, V4".into()));
    }

    #[test]
    fn csv_is_stable() {
        let ch = Dmc::bsc(0.1).unwrap();
        let joint = joint_for(3, &[1, 1], &ch);
        let a = check_round_bounds(&joint, &[1, 1], 0.5, 0.5).unwrap().to_csv();
        let b = check_round_bounds(&joint, &[1, 1], 0.5, 0.5).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("label,lhs,rhs,slack\ndp-C1[2],"));
    }
}

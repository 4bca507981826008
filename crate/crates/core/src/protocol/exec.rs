use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{unpack, DecoderPart, GeneralCode, Lookup, Tap, User};
use crate::channel::Dmc;
use crate::error::{Error, Result};
use crate::rng;
use crate::source::{avg_distortion, DistortionMeasure, JointSource};

/// Everything that happened in one run of a code. Channel entries are
/// `None` in slots where that direction is idle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub x1: Vec<usize>,
    pub x2: Vec<usize>,
    pub u1: Vec<Option<usize>>,
    pub v1: Vec<Option<usize>>,
    pub u2: Vec<Option<usize>>,
    pub v2: Vec<Option<usize>>,
    pub xhat1: Vec<usize>,
    pub xhat2: Vec<usize>,
}

impl ExecutionTrace {
    pub(crate) fn start(x1: Vec<usize>, x2: Vec<usize>, horizon: usize) -> Self {
        let n = x1.len();
        Self {
            x1,
            x2,
            u1: vec![None; horizon],
            v1: vec![None; horizon],
            u2: vec![None; horizon],
            v2: vec![None; horizon],
            xhat1: vec![0; n],
            xhat2: vec![0; n],
        }
    }

    /// Value of a tap in `user`'s local history.
    pub fn tap_value(&self, user: User, tap: Tap) -> Result<usize> {
        let v = match (user, tap) {
            (User::One, Tap::Source(t)) => Some(self.x1[t]),
            (User::Two, Tap::Source(t)) => Some(self.x2[t]),
            (User::One, Tap::Sent(j)) => self.u1[j],
            (User::Two, Tap::Sent(j)) => self.u2[j],
            (User::One, Tap::Received(j)) => self.v2[j],
            (User::Two, Tap::Received(j)) => self.v1[j],
        };
        v.ok_or_else(|| Error::Consistency(format!("{user:?} read unset history {tap:?}")))
    }
}

impl GeneralCode {
    fn table_index(&self, user: User, taps: &[Tap], trace: &ExecutionTrace) -> Result<usize> {
        let mut idx = 0usize;
        for &t in taps {
            idx = idx * self.alphabets.tap_radix(user, t) + trace.tap_value(user, t)?;
        }
        Ok(idx)
    }

    pub(crate) fn eval_lookup(&self, user: User, l: &Lookup, trace: &ExecutionTrace) -> Result<usize> {
        let idx = self.table_index(user, &l.taps, trace)?;
        l.table
            .get(idx)
            .map(|&v| v as usize)
            .ok_or_else(|| Error::Consistency(format!("lookup index {idx} outside table")))
    }

    /// Channel input of `user` in `slot`, or `None` when idle.
    pub fn encode(&self, user: User, slot: usize, trace: &ExecutionTrace) -> Result<Option<usize>> {
        match &self.encoders(user)[slot] {
            Some(l) => self.eval_lookup(user, l, trace).map(Some),
            None => Ok(None),
        }
    }

    /// Writes one decoder part's reconstruction into `out`.
    pub(crate) fn decode_part(
        &self,
        user: User,
        part: &DecoderPart,
        trace: &ExecutionTrace,
        out: &mut [usize],
    ) -> Result<()> {
        let idx = self.table_index(user, &part.taps, trace)?;
        let block = *part
            .table
            .get(idx)
            .ok_or_else(|| Error::Consistency(format!("decoder index {idx} outside table")))?;
        let digits = unpack(block as usize, self.alphabets.recon_at(user), part.positions.len());
        for (&p, d) in part.positions.iter().zip(digits) {
            out[p] = d;
        }
        Ok(())
    }

    /// Fills both reconstructions from a completed trace.
    pub(crate) fn decode_all(&self, trace: &mut ExecutionTrace) -> Result<()> {
        let mut xhat1 = vec![0; self.n];
        let mut xhat2 = vec![0; self.n];
        for part in &self.estimate_x1.parts {
            self.decode_part(User::Two, part, trace, &mut xhat1)?;
        }
        for part in &self.estimate_x2.parts {
            self.decode_part(User::One, part, trace, &mut xhat2)?;
        }
        trace.xhat1 = xhat1;
        trace.xhat2 = xhat2;
        Ok(())
    }

    /// Runs the code once on given source blocks.
    pub fn run(
        &self,
        x1: &[usize],
        x2: &[usize],
        ch1: &Dmc,
        ch2: &Dmc,
        rng: &mut rng::SimRng,
    ) -> Result<ExecutionTrace> {
        if x1.len() != self.n || x2.len() != self.n {
            return Err(Error::LengthMismatch {
                left: x1.len().min(x2.len()),
                right: self.n,
            });
        }
        let mut t = ExecutionTrace::start(x1.to_vec(), x2.to_vec(), self.horizon());
        for i in 0..self.horizon() {
            let u1 = self.encode(User::One, i, &t)?;
            let u2 = self.encode(User::Two, i, &t)?;
            t.u1[i] = u1;
            t.u2[i] = u2;
            t.v1[i] = u1.map(|u| ch1.sample_unchecked(u, rng));
            t.v2[i] = u2.map(|u| ch2.sample_unchecked(u, rng));
        }
        self.decode_all(&mut t)?;
        Ok(t)
    }
}

/// Monte Carlo distortion estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: usize,
    pub d1: f64,
    pub d2: f64,
    pub d1_stderr: f64,
    pub d2_stderr: f64,
    /// The first few traces, if requested.
    pub traces: Vec<ExecutionTrace>,
}

/// Runs `trials` independent blocks. Trial `t` draws all randomness from
/// stream `t` of `seed`, so results do not depend on thread count.
#[allow(clippy::too_many_arguments)]
pub fn execute_monte_carlo(
    code: &GeneralCode,
    source: &JointSource,
    ch1: &Dmc,
    ch2: &Dmc,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    trials: usize,
    seed: u64,
    keep_traces: usize,
) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    code.check_compatible(source, ch1, ch2)?;
    if d1.source_size() != code.alphabets.source1 || d1.recon_size() != code.alphabets.recon1 {
        return Err(Error::AlphabetMismatch("distortion measure 1".into()));
    }
    if d2.source_size() != code.alphabets.source2 || d2.recon_size() != code.alphabets.recon2 {
        return Err(Error::AlphabetMismatch("distortion measure 2".into()));
    }
    let per_trial: Vec<(f64, f64, Option<ExecutionTrace>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t as u64);
            let (x1, x2) = source.sample_block(code.n, &mut r)?;
            let trace = code.run(&x1, &x2, ch1, ch2, &mut r)?;
            let a = avg_distortion(&trace.x1, &trace.xhat1, d1)?;
            let b = avg_distortion(&trace.x2, &trace.xhat2, d2)?;
            Ok((a, b, (t < keep_traces).then_some(trace)))
        })
        .collect::<Result<_>>()?;
    let (m1, s1) = mean_stderr(per_trial.iter().map(|r| r.0));
    let (m2, s2) = mean_stderr(per_trial.iter().map(|r| r.1));
    Ok(MonteCarloResult {
        trials,
        d1: m1,
        d2: m2,
        d1_stderr: s1,
        d2_stderr: s2,
        traces: per_trial.into_iter().filter_map(|r| r.2).collect(),
    })
}

pub(crate) fn mean_stderr(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::super::{Alphabets, Decoder, Schedule};
    use super::*;

    fn forward_code() -> GeneralCode {
        let s = Schedule::from_bits(&[1, 0], &[0, 1]).unwrap();
        let fwd = |slot| Decoder {
            parts: vec![DecoderPart {
                positions: vec![0],
                taps: vec![Tap::Received(slot)],
                table: vec![0, 1],
            }],
        };
        GeneralCode::new(
            1,
            Alphabets::binary(),
            s,
            vec![
                Some(Lookup {
                    taps: vec![Tap::Source(0)],
                    table: vec![0, 1],
                }),
                None,
            ],
            vec![
                None,
                Some(Lookup {
                    taps: vec![Tap::Source(0)],
                    table: vec![0, 1],
                }),
            ],
            fwd(0),
            fwd(1),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_forwarding_is_lossless() {
        let code = forward_code();
        let src = JointSource::doubly_symmetric(0.3).unwrap();
        let id = Dmc::identity(2).unwrap();
        let h = DistortionMeasure::hamming(2).unwrap();
        let r = execute_monte_carlo(&code, &src, &id, &id, &h, &h, 200, 1, 3).unwrap();
        assert_eq!(r.d1, 0.0);
        assert_eq!(r.d2, 0.0);
        assert_eq!(r.traces.len(), 3);
        let t = &r.traces[0];
        assert_eq!(t.u1[1], None);
        assert_eq!(t.v2[0], None);
        assert_eq!(t.xhat1, t.x1);
    }

    #[test]
    fn bsc_forwarding_matches_crossover() {
        let code = forward_code();
        let src = JointSource::doubly_symmetric(0.3).unwrap();
        let bsc = Dmc::bsc(0.2).unwrap();
        let h = DistortionMeasure::hamming(2).unwrap();
        let r = execute_monte_carlo(&code, &src, &bsc, &bsc, &h, &h, 20_000, 9, 0).unwrap();
        assert!((r.d1 - 0.2).abs() < 4.0 * r.d1_stderr + 1e-3);
        assert!((r.d2 - 0.2).abs() < 4.0 * r.d2_stderr + 1e-3);
        let again = execute_monte_carlo(&code, &src, &bsc, &bsc, &h, &h, 20_000, 9, 0).unwrap();
        assert_eq!(r.d1, again.d1);
    }

    #[test]
    fn rejects_bad_arguments() {
        let code = forward_code();
        let src = JointSource::doubly_symmetric(0.3).unwrap();
        let id = Dmc::identity(2).unwrap();
        let h = DistortionMeasure::hamming(2).unwrap();
        assert!(execute_monte_carlo(&code, &src, &id, &id, &h, &h, 0, 1, 0).is_err());
        let id3 = Dmc::identity(3).unwrap();
        assert!(matches!(
            execute_monte_carlo(&code, &src, &id3, &id, &h, &h, 5, 1, 0),
            Err(Error::AlphabetMismatch(_))
        ));
    }
}

//! Separation pipeline: an interactive source code derived from a chain
//! witness, composed with block-coded bit transport over each channel.
//!
//! Round `k` of the witness becomes phase `k`. The sender quantizes its
//! block with a random codebook drawn from the witness marginal of `U_k`
//! given the earlier auxiliaries, sends the bin index of the chosen
//! codeword, and the receiver picks the codeword in that bin that best
//! explains its own source block. Bin indices travel as chunks of at most
//! [`MAX_CHUNK_BITS`] bits, each protected by a random block code with
//! exhaustive maximum-likelihood decoding.
//!
//! Codebook symbols at position `i` are drawn by inverse CDF from a shared
//! uniform, conditioned on that position's earlier auxiliaries. A decoding
//! error in an early round therefore perturbs later codebooks only at the
//! positions where the two users' views disagree.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_index, Dmc};
use crate::error::{Error, Result};
use crate::kaspi::{AuxChain, RegionPoint};
use crate::protocol::{mean_stderr, User};
use crate::rng;
use crate::source::{DistortionMeasure, JointSource};

/// Largest message carried by one transport block.
pub const MAX_CHUNK_BITS: usize = 16;
/// Default cap on quantizer codebook size per sub-block, in bits.
pub const DEFAULT_CODEBOOK_BITS: usize = 12;
/// Hard cap on quantizer codebook size per sub-block, in bits.
pub const MAX_CODEBOOK_BITS: usize = 16;

/// Default number of calibration blocks.
pub const DEFAULT_CALIBRATION_TRIALS: usize = 400;

const CAPACITY_TOL: f64 = 1e-12;
const ROUND_TOL: f64 = 1e-9;
const NEG: f64 = -1e9;
const UNIT: u32 = 1 << 16;

/// One transport block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub bits: usize,
    pub uses: usize,
}

/// One round of the source code and its transport budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// 1-based round number.
    pub round: usize,
    pub sender: User,
    /// Witness rate of the round, bits per source symbol.
    pub rate: f64,
    /// Bits the quantizer emits per block.
    pub message_bits: usize,
    /// Channel uses `z_k`.
    pub uses: usize,
    /// `z_k` times the capacity of the phase's channel.
    pub bit_budget: f64,
    pub chunks: Vec<Chunk>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationPlan {
    pub n: usize,
    pub margin: f64,
    pub capacities: (f64, f64),
    pub phases: Vec<Phase>,
    pub witness: AuxChain,
    /// Cap on quantizer codebook size per sub-block, in bits.
    pub max_codebook_bits: usize,
    /// Relative excess of codebook rate over the round's quantization rate.
    pub codebook_slack: f64,
    /// Blocks simulated to fit the reconstruction maps; 0 keeps the
    /// witness maps.
    pub calibration_trials: usize,
}

fn split_even(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|j| total / parts + usize::from(j < total % parts))
        .collect()
}

impl SeparationPlan {
    pub fn z(&self) -> Vec<usize> {
        self.phases.iter().map(|p| p.uses).collect()
    }

    /// Channel uses of each channel per source symbol.
    pub fn uses_per_symbol(&self) -> (f64, f64) {
        let mut a = 0;
        let mut b = 0;
        for p in &self.phases {
            match p.sender {
                User::One => a += p.uses,
                User::Two => b += p.uses,
            }
        }
        (a as f64 / self.n as f64, b as f64 / self.n as f64)
    }

    /// Checks the phase structure and chunk accounting.
    pub fn validate(&self) -> Result<()> {
        self.witness.validate()?;
        if self.n == 0 {
            return Err(Error::Plan("block length must be >= 1".into()));
        }
        if self.phases.len() != self.witness.q() || self.phases.len() % 2 != 0 {
            return Err(Error::Plan(format!(
                "{} phases for a {}-round witness",
                self.phases.len(),
                self.witness.q()
            )));
        }
        if self.max_codebook_bits == 0 || self.max_codebook_bits > MAX_CODEBOOK_BITS {
            return Err(Error::Plan(format!(
                "codebook cap must be in 1..={MAX_CODEBOOK_BITS} bits"
            )));
        }
        if !(self.codebook_slack >= -1.0) {
            return Err(Error::Plan("codebook slack must be >= -1".into()));
        }
        for (k, p) in self.phases.iter().enumerate() {
            let expect = if k % 2 == 0 { User::One } else { User::Two };
            if p.round != k + 1 || p.sender != expect {
                return Err(Error::Plan(format!("phase {} out of order", k + 1)));
            }
            let bits: usize = p.chunks.iter().map(|c| c.bits).sum();
            let uses: usize = p.chunks.iter().map(|c| c.uses).sum();
            if bits != p.message_bits || uses != p.uses {
                return Err(Error::Plan(format!(
                    "phase {}: chunks carry {bits} bits in {uses} uses, plan says {} in {}",
                    p.round, p.message_bits, p.uses
                )));
            }
            if let Some(c) = p
                .chunks
                .iter()
                .find(|c| c.bits > MAX_CHUNK_BITS || (c.bits > 0 && c.uses == 0))
            {
                return Err(Error::Plan(format!(
                    "phase {}: chunk of {} bits in {} uses",
                    p.round, c.bits, c.uses
                )));
            }
            if p.message_bits as f64 > p.bit_budget + ROUND_TOL {
                return Err(Error::Plan(format!(
                    "phase {}: {} bits exceed the budget {:.3}",
                    p.round, p.message_bits, p.bit_budget
                )));
            }
        }
        Ok(())
    }
}

/// Channel budgets for a region point: `z_k = ceil(rate_k n (1 + margin) / C)`
/// uses of the sender's channel in phase `k`. A round that rounds down to
/// zero message bits gets no uses.
pub fn build_plan(
    point: &RegionPoint,
    ch1: &Dmc,
    ch2: &Dmc,
    n: usize,
    margin: f64,
) -> Result<SeparationPlan> {
    if n == 0 {
        return Err(Error::InvalidArgument("block length must be >= 1".into()));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::InvalidArgument(format!("margin {margin} must be >= 0")));
    }
    let q = point.witness.q();
    if point.round_rates.len() != q {
        return Err(Error::Plan(format!(
            "{} round rates for a {q}-round witness",
            point.round_rates.len()
        )));
    }
    let c1 = ch1.capacity(CAPACITY_TOL)?.capacity;
    let c2 = ch2.capacity(CAPACITY_TOL)?.capacity;
    let mut phases = Vec::with_capacity(q);
    for (k, &rate) in point.round_rates.iter().enumerate() {
        let (sender, cap) = if k % 2 == 0 { (User::One, c1) } else { (User::Two, c2) };
        let bits_real = rate.max(0.0) * n as f64;
        let message_bits = (bits_real + ROUND_TOL).floor() as usize;
        let uses = if message_bits == 0 {
            0
        } else if cap <= CAPACITY_TOL {
            return Err(Error::Plan(format!(
                "round {} needs {bits_real:.3} bits over a zero-capacity channel",
                k + 1
            )));
        } else {
            (bits_real * (1.0 + margin) / cap - ROUND_TOL).ceil() as usize
        };
        let count = message_bits.div_ceil(MAX_CHUNK_BITS);
        let mut chunks = Vec::with_capacity(count);
        let (mut sent_bits, mut sent_uses) = (0, 0);
        for bits in split_even(message_bits, count) {
            sent_bits += bits;
            let upto = uses * sent_bits / message_bits;
            chunks.push(Chunk {
                bits,
                uses: upto - sent_uses,
            });
            sent_uses = upto;
        }
        phases.push(Phase {
            round: k + 1,
            sender,
            rate,
            message_bits,
            uses,
            bit_budget: uses as f64 * cap,
            chunks,
        });
    }
    let plan = SeparationPlan {
        n,
        margin,
        capacities: (c1, c2),
        phases,
        witness: point.witness.clone(),
        max_codebook_bits: DEFAULT_CODEBOOK_BITS,
        codebook_slack: 0.0,
        calibration_trials: DEFAULT_CALIBRATION_TRIALS,
    };
    plan.validate()?;
    Ok(plan)
}

/// Transport outcome of one phase, aggregated over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub round: usize,
    pub bits: usize,
    pub uses: usize,
    pub chunks: usize,
    pub chunk_errors: usize,
    pub trials: usize,
}

impl PhaseStats {
    /// Fraction of transport blocks decoded wrongly.
    pub fn block_error_rate(&self) -> f64 {
        let blocks = self.chunks * self.trials;
        if blocks == 0 {
            0.0
        } else {
            self.chunk_errors as f64 / blocks as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportStats {
    pub phases: Vec<PhaseStats>,
}

impl TransportStats {
    /// Block error rate over all transport blocks of all phases.
    pub fn block_error_rate(&self) -> f64 {
        let blocks: usize = self.phases.iter().map(|p| p.chunks * p.trials).sum();
        let errors: usize = self.phases.iter().map(|p| p.chunk_errors).sum();
        if blocks == 0 {
            0.0
        } else {
            errors as f64 / blocks as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub d1: f64,
    pub d2: f64,
    /// Transport blocks decoded wrongly, per phase.
    pub phase_errors: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub d1: f64,
    pub d2: f64,
    pub d1_stderr: f64,
    pub d2_stderr: f64,
    pub uses_per_symbol: (f64, f64),
    pub stats: TransportStats,
    pub trials: Vec<TrialRecord>,
}

impl SeparationResult {
    /// One row per trial: `trial,D1,D2,phase1_errors,...`.
    pub fn to_csv(&self) -> String {
        let q = self.stats.phases.len();
        let mut out = String::from("trial,D1,D2");
        for k in 1..=q {
            out.push_str(&format!(",phase{k}_errors"));
        }
        out.push('\n');
        for t in &self.trials {
            out.push_str(&format!("{},{},{}", t.trial, t.d1, t.d2));
            for e in &t.phase_errors {
                out.push_str(&format!(",{e}"));
            }
            out.push('\n');
        }
        out
    }
}

enum Book {
    /// Every sequence, index read as base-`|U|` digits.
    Full,
    /// Symbols fixed in advance, row-major by codeword.
    Fixed(Vec<u8>),
    /// Shared uniforms mapped through the positionwise conditional CDF.
    Uniform(Vec<u16>),
}

struct SubBlock {
    start: usize,
    len: usize,
    bin_bits: usize,
    size: usize,
    book: Book,
}

/// Quantizer of one round.
struct RoundCode {
    sender: User,
    alphabet: usize,
    /// Number of (U_1..U_{k-1}) configurations.
    priors: usize,
    /// Sender score `log Q(u|x,p) / P(u|p)`, indexed by (x, p, u).
    enc: Vec<f64>,
    /// Receiver score `log P(u|y,p) / P(u|p)`, indexed by (y, p, u).
    dec: Vec<f64>,
    /// CDF of `P(.|p)` scaled to `UNIT`.
    cdf: Vec<u32>,
    blocks: Vec<SubBlock>,
}

fn info_density(num: f64, den: f64) -> f64 {
    if num <= 0.0 || den <= 0.0 {
        NEG
    } else {
        (num / den).log2()
    }
}

fn inverse_cdf(cdf: &[u32], w: u32) -> usize {
    cdf.iter().position(|&c| w < c).unwrap_or(cdf.len() - 1)
}

impl RoundCode {
    fn symbol(&self, b: &SubBlock, idx: usize, i: usize, prior: usize) -> usize {
        match &b.book {
            Book::Full => idx / self.alphabet.pow((b.len - 1 - i) as u32) % self.alphabet,
            Book::Fixed(s) => s[idx * b.len + i] as usize,
            Book::Uniform(w) => {
                let s = self.alphabet;
                inverse_cdf(&self.cdf[prior * s..(prior + 1) * s], w[idx * b.len + i] as u32)
            }
        }
    }

    /// Best candidate among `candidates` under `table` for a block; ties
    /// go to the first.
    fn best(
        &self,
        b: &SubBlock,
        table: &[f64],
        x: &[usize],
        prior: &[usize],
        candidates: impl Iterator<Item = usize>,
    ) -> Option<usize> {
        let s = self.alphabet;
        let rows: Vec<&[f64]> = (0..b.len)
            .map(|i| {
                let p = b.start + i;
                let r = (x[p] * self.priors + prior[p]) * s;
                &table[r..r + s]
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for idx in candidates {
            let mut score = 0.0;
            for (i, row) in rows.iter().enumerate() {
                score += row[self.symbol(b, idx, i, prior[b.start + i])];
            }
            if best.map_or(true, |(_, v)| score > v) {
                best = Some((idx, score));
            }
        }
        best.map(|(idx, _)| idx)
    }

    fn fill(&self, b: &SubBlock, idx: usize, prior: &[usize], out: &mut [usize]) {
        for i in 0..b.len {
            out[b.start + i] = self.symbol(b, idx, i, prior[b.start + i]);
        }
    }
}

/// Row-normalizes a table of `width`-wide rows; empty rows become uniform.
fn normalize_rows(mass: &[f64], width: usize) -> Vec<f64> {
    let mut out = mass.to_vec();
    for row in out.chunks_mut(width) {
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        } else {
            row.iter_mut().for_each(|v| *v = 1.0 / width as f64);
        }
    }
    out
}

fn build_rounds(plan: &SeparationPlan, source: &JointSource, seed: u64) -> Result<Vec<RoundCode>> {
    let chain = &plan.witness;
    let joint = chain.joint(source)?;
    let engine = crate::infotheory::InfoEngine::new(&joint);
    let (nx1, nx2) = chain.source_sizes;
    let n = plan.n;
    let mut rounds = Vec::with_capacity(chain.q());
    let mut priors = 1usize;
    for (k, phase) in plan.phases.iter().enumerate() {
        let s = chain.aux_sizes[k];
        let (own, other, own_size, other_size) = if k % 2 == 0 {
            ("X1", "X2", nx1, nx2)
        } else {
            ("X2", "X1", nx2, nx1)
        };
        let prior_names: Vec<String> = (1..=k).map(|j| format!("U{j}")).collect();
        let mut upto = prior_names.clone();
        upto.push(format!("U{}", k + 1));
        let marg = normalize_rows(joint.marginalize(&upto)?.mass(), s);
        let mut with_other = vec![other.to_string()];
        with_other.extend(upto.iter().cloned());
        let side = normalize_rows(joint.marginalize(&with_other)?.mass(), s);
        let cond = &chain.conditionals[k];
        let mut enc = vec![NEG; own_size * priors * s];
        let mut dec = vec![NEG; other_size * priors * s];
        for p in 0..priors {
            for u in 0..s {
                let m = marg[p * s + u];
                for x in 0..own_size {
                    let r = (x * priors + p) * s + u;
                    enc[r] = info_density(cond[r], m);
                }
                for y in 0..other_size {
                    let r = (y * priors + p) * s + u;
                    dec[r] = info_density(side[r], m);
                }
            }
        }
        let mut cdf = Vec::with_capacity(priors * s);
        for p in 0..priors {
            let mut acc = 0.0;
            for u in 0..s {
                acc += marg[p * s + u];
                let c = if u + 1 == s { UNIT } else { (acc * UNIT as f64).round() as u32 };
                cdf.push(c.min(UNIT));
            }
        }
        let own_rate = engine
            .cmi(&[own.to_string()], &[format!("U{}", k + 1)], &prior_names)?
            .max(0.0);
        let cap = plan.max_codebook_bits;
        let scale = 1.0 + plan.codebook_slack;
        let total = (n as f64 * own_rate * scale).max(phase.message_bits as f64);
        let count = ((total / cap as f64).ceil() as usize).clamp(1, n);
        let lens = split_even(n, count);
        let bins = split_even(phase.message_bits, count);
        let mut blocks = Vec::with_capacity(count);
        let mut start = 0;
        let mut r = rng::stream(rng::child_seed(seed, 1), k as u64);
        for (&len, &bin_bits) in lens.iter().zip(&bins) {
            let want = (len as f64 * own_rate * scale).round() as usize;
            let cb_bits = want.clamp(bin_bits, cap);
            let full_bits = len as f64 * (s as f64).log2();
            let (size, book) = if full_bits <= cb_bits as f64 + ROUND_TOL {
                (s.pow(len as u32), Book::Full)
            } else if priors == 1 {
                let size = 1usize << cb_bits;
                let syms = (0..size * len)
                    .map(|_| inverse_cdf(&cdf[..s], r.gen_range(0..UNIT)) as u8)
                    .collect();
                (size, Book::Fixed(syms))
            } else {
                let size = 1usize << cb_bits;
                (size, Book::Uniform((0..size * len).map(|_| r.gen()).collect()))
            };
            blocks.push(SubBlock {
                start,
                len,
                bin_bits,
                size,
                book,
            });
            start += len;
        }
        rounds.push(RoundCode {
            sender: phase.sender,
            alphabet: s,
            priors,
            enc,
            dec,
            cdf,
            blocks,
        });
        priors *= s;
    }
    Ok(rounds)
}

struct TransportCode {
    bits: usize,
    uses: usize,
    /// Codeword symbols, row-major by message.
    book: Vec<u8>,
}

/// Random block code with distinct codewords whenever the input support
/// allows it. Small spaces are sampled without replacement uniformly over
/// the support; larger ones draw from `input` and reject repeats.
fn random_block_code<R: Rng + ?Sized>(bits: usize, uses: usize, input: &[f64], r: &mut R) -> Vec<u8> {
    let count = 1usize << bits;
    let support: Vec<u8> = (0..input.len()).filter(|&x| input[x] > 0.0).map(|x| x as u8).collect();
    let space = (support.len() as f64).powi(uses as i32);
    if space < count as f64 {
        return (0..count * uses).map(|_| sample_index(input, r) as u8).collect();
    }
    if space <= 4.0 * count as f64 {
        let total = space as usize;
        let picks = rand::seq::index::sample(r, total, count);
        let mut book = Vec::with_capacity(count * uses);
        for j in picks.iter() {
            book.extend((0..uses).rev().map(|i| support[j / support.len().pow(i as u32) % support.len()]));
        }
        return book;
    }
    let mut seen = std::collections::HashSet::with_capacity(count);
    let mut book = Vec::with_capacity(count * uses);
    while seen.len() < count {
        let word: Vec<u8> = (0..uses).map(|_| sample_index(input, r) as u8).collect();
        if seen.insert(word.clone()) {
            book.extend(word);
        }
    }
    book
}

fn build_transport(plan: &SeparationPlan, ch1: &Dmc, ch2: &Dmc, seed: u64) -> Result<Vec<Vec<TransportCode>>> {
    let inputs = [
        ch1.capacity(CAPACITY_TOL)?.optimal_input,
        ch2.capacity(CAPACITY_TOL)?.optimal_input,
    ];
    let mut out = Vec::with_capacity(plan.phases.len());
    for (k, p) in plan.phases.iter().enumerate() {
        let input = &inputs[k % 2];
        let mut r = rng::stream(rng::child_seed(seed, 2), k as u64);
        let codes = p
            .chunks
            .iter()
            .map(|c| TransportCode {
                bits: c.bits,
                uses: c.uses,
                book: random_block_code(c.bits, c.uses, input, &mut r),
            })
            .collect();
        out.push(codes);
    }
    Ok(out)
}

impl TransportCode {
    fn send<R: Rng + ?Sized>(&self, msg: usize, ch: &Dmc, logw: &[f64], rng: &mut R) -> usize {
        if self.bits == 0 {
            return 0;
        }
        let m = self.uses;
        let nx = ch.input_size();
        let word = &self.book[msg * m..(msg + 1) * m];
        let y: Vec<usize> = word
            .iter()
            .map(|&x| ch.sample_unchecked(x as usize, rng))
            .collect();
        let mut best = (0, f64::NEG_INFINITY);
        for cand in 0..1usize << self.bits {
            let w = &self.book[cand * m..(cand + 1) * m];
            let mut s = 0.0;
            for i in 0..m {
                s += logw[y[i] * nx + w[i] as usize];
                if s <= best.1 {
                    break;
                }
            }
            if s > best.1 {
                best = (cand, s);
            }
        }
        best.0
    }
}

fn log_likelihoods(ch: &Dmc) -> Vec<f64> {
    let mut t = vec![NEG; ch.output_size() * ch.input_size()];
    for y in 0..ch.output_size() {
        for x in 0..ch.input_size() {
            let p = ch.prob(x, y);
            if p > 0.0 {
                t[y * ch.input_size() + x] = p.log2();
            }
        }
    }
    t
}

fn check_inputs(plan: &SeparationPlan, source: &JointSource, ch1: &Dmc, ch2: &Dmc) -> Result<()> {
    plan.validate()?;
    if (source.size1(), source.size2()) != plan.witness.source_sizes {
        return Err(Error::AlphabetMismatch("source does not match the witness".into()));
    }
    for ch in [ch1, ch2] {
        if ch.input_size() > u8::MAX as usize + 1 {
            return Err(Error::InvalidArgument("channel input alphabet above 256".into()));
        }
    }
    if plan.witness.aux_sizes.iter().any(|&s| s > u8::MAX as usize + 1) {
        return Err(Error::InvalidArgument("auxiliary alphabet above 256".into()));
    }
    let caps = (
        ch1.capacity(CAPACITY_TOL)?.capacity,
        ch2.capacity(CAPACITY_TOL)?.capacity,
    );
    for p in &plan.phases {
        let cap = if p.sender == User::One { caps.0 } else { caps.1 };
        if p.message_bits as f64 > p.uses as f64 * cap + ROUND_TOL {
            return Err(Error::Plan(format!(
                "phase {}: {} bits exceed {} uses at capacity {cap:.6}",
                p.round, p.message_bits, p.uses
            )));
        }
    }
    Ok(())
}

struct Pipeline<'a> {
    plan: &'a SeparationPlan,
    source: &'a JointSource,
    channels: [&'a Dmc; 2],
    rounds: Vec<RoundCode>,
    transport: Vec<Vec<TransportCode>>,
    logw: [Vec<f64>; 2],
}

/// Sources and the packed auxiliary sequence each user ends up with.
struct Outcome {
    x1: Vec<usize>,
    x2: Vec<usize>,
    /// Per user, `U_1..U_q` packed per position as that user sees them.
    views: [Vec<usize>; 2],
    phase_errors: Vec<usize>,
}

impl Pipeline<'_> {
    fn simulate<R: Rng + ?Sized>(&self, r: &mut R) -> Result<Outcome> {
        let n = self.plan.n;
        let (x1, x2) = self.source.sample_block(n, r)?;
        let mut views = [vec![0usize; n], vec![0usize; n]];
        let mut phase_errors = Vec::with_capacity(self.rounds.len());
        let mut sent = vec![0usize; n];
        let mut got = vec![0usize; n];
        for (k, rc) in self.rounds.iter().enumerate() {
            let (s, d) = match rc.sender {
                User::One => (0, 1),
                User::Two => (1, 0),
            };
            let (xs, xd) = if s == 0 { (&x1, &x2) } else { (&x2, &x1) };
            // Bin indices, most significant bit first.
            let mut bits = Vec::with_capacity(self.plan.phases[k].message_bits);
            for b in &rc.blocks {
                let idx = rc.best(b, &rc.enc, xs, &views[s], 0..b.size).unwrap_or(0);
                rc.fill(b, idx, &views[s], &mut sent);
                bits.extend((0..b.bin_bits).rev().map(|j| (idx >> j) & 1));
            }
            let mut received = Vec::with_capacity(bits.len());
            let mut errors = 0;
            let mut at = 0;
            for code in &self.transport[k] {
                let msg = bits[at..at + code.bits].iter().fold(0, |a, &v| (a << 1) | v);
                let out = code.send(msg, self.channels[s], &self.logw[s], r);
                errors += usize::from(out != msg);
                received.extend((0..code.bits).rev().map(|j| (out >> j) & 1));
                at += code.bits;
            }
            phase_errors.push(errors);
            let mut at = 0;
            for b in &rc.blocks {
                let beta = received[at..at + b.bin_bits].iter().fold(0, |a, &v| (a << 1) | v);
                at += b.bin_bits;
                let step = 1usize << b.bin_bits;
                let idx = rc
                    .best(b, &rc.dec, xd, &views[d], (beta..b.size).step_by(step))
                    .unwrap_or(beta % b.size);
                rc.fill(b, idx, &views[d], &mut got);
            }
            for p in 0..n {
                views[s][p] = views[s][p] * rc.alphabet + sent[p];
                views[d][p] = views[d][p] * rc.alphabet + got[p];
            }
        }
        Ok(Outcome {
            x1,
            x2,
            views,
            phase_errors,
        })
    }
}

/// Reconstruction tables indexed like the witness maps.
struct Maps {
    recon1: Vec<usize>,
    recon2: Vec<usize>,
}

/// Bayes reconstruction under the empirical joint law of calibration
/// outcomes; cells never visited keep the witness entry.
fn calibrate(
    chain: &AuxChain,
    outcomes: &[Outcome],
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
) -> Maps {
    let all: usize = chain.aux_sizes.iter().product();
    let (nx1, nx2) = chain.source_sizes;
    let mut c1 = vec![0u64; nx2 * all * nx1];
    let mut c2 = vec![0u64; nx1 * all * nx2];
    for o in outcomes {
        for p in 0..o.x1.len() {
            c1[(o.x2[p] * all + o.views[1][p]) * nx1 + o.x1[p]] += 1;
            c2[(o.x1[p] * all + o.views[0][p]) * nx2 + o.x2[p]] += 1;
        }
    }
    let fit = |counts: &[u64], fallback: &[usize], nx: usize, d: &DistortionMeasure| {
        counts
            .chunks(nx)
            .zip(fallback)
            .map(|(row, &f)| {
                if row.iter().all(|&c| c == 0) {
                    return f;
                }
                let w: Vec<f64> = row.iter().map(|&c| c as f64).collect();
                d.best_reconstruction(&w)
            })
            .collect()
    };
    Maps {
        recon1: fit(&c1, &chain.recon1, nx1, d1),
        recon2: fit(&c2, &chain.recon2, nx2, d2),
    }
}

fn score(chain: &AuxChain, o: &Outcome, maps: &Maps, d1: &DistortionMeasure, d2: &DistortionMeasure, trial: usize) -> TrialRecord {
    let all: usize = chain.aux_sizes.iter().product();
    let n = o.x1.len();
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for p in 0..n {
        e1 += d1.d(o.x1[p], maps.recon1[o.x2[p] * all + o.views[1][p]]);
        e2 += d2.d(o.x2[p], maps.recon2[o.x1[p] * all + o.views[0][p]]);
    }
    TrialRecord {
        trial,
        d1: e1 / n as f64,
        d2: e2 / n as f64,
        phase_errors: o.phase_errors.clone(),
    }
}

/// Monte-Carlo run of the plan. Codebooks derive from `seed`; trial `t`
/// draws its source block and channel noise from its own stream, so the
/// result does not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run(
    plan: &SeparationPlan,
    source: &JointSource,
    ch1: &Dmc,
    ch2: &Dmc,
    d1: &DistortionMeasure,
    d2: &DistortionMeasure,
    trials: usize,
    seed: u64,
) -> Result<SeparationResult> {
    check_inputs(plan, source, ch1, ch2)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let chain = &plan.witness;
    if chain.recon_sizes != (d1.recon_size(), d2.recon_size())
        || (d1.source_size(), d2.source_size()) != chain.source_sizes
    {
        return Err(Error::AlphabetMismatch(
            "distortion measures do not match the witness".into(),
        ));
    }
    let pipe = Pipeline {
        plan,
        source,
        channels: [ch1, ch2],
        rounds: build_rounds(plan, source, seed)?,
        transport: build_transport(plan, ch1, ch2, seed)?,
        logw: [log_likelihoods(ch1), log_likelihoods(ch2)],
    };
    let batch = |label: u64, count: usize| -> Result<Vec<Outcome>> {
        let base = rng::child_seed(seed, label);
        (0..count)
            .into_par_iter()
            .map(|t| pipe.simulate(&mut rng::stream(base, t as u64)))
            .collect()
    };
    let maps = if plan.calibration_trials > 0 {
        calibrate(chain, &batch(4, plan.calibration_trials)?, d1, d2)
    } else {
        Maps {
            recon1: chain.recon1.clone(),
            recon2: chain.recon2.clone(),
        }
    };
    let records: Vec<TrialRecord> = batch(3, trials)?
        .iter()
        .enumerate()
        .map(|(t, o)| score(chain, o, &maps, d1, d2, t))
        .collect();
    let (m1, s1) = mean_stderr(records.iter().map(|t| t.d1));
    let (m2, s2) = mean_stderr(records.iter().map(|t| t.d2));
    let phases = plan
        .phases
        .iter()
        .enumerate()
        .map(|(k, p)| PhaseStats {
            round: p.round,
            bits: p.message_bits,
            uses: p.uses,
            chunks: p.chunks.len(),
            chunk_errors: records.iter().map(|t| t.phase_errors[k]).sum(),
            trials,
        })
        .collect();
    Ok(SeparationResult {
        d1: m1,
        d2: m2,
        d1_stderr: s1,
        d2_stderr: s2,
        uses_per_symbol: plan.uses_per_symbol(),
        stats: TransportStats { phases },
        trials: records,
    })
}

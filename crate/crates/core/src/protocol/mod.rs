//! Executable interactive codes.
//!
//! A [`GeneralCode`] is a scheduled two-way code: in slot `i` User 1 feeds
//! channel 1 when `c1[i]` is set and User 2 feeds channel 2 when `c2[i]` is
//! set. Every encoder and decoder is a deterministic lookup table over a
//! list of [`Tap`]s into the owning user's local history (own source
//! symbols, own past channel inputs, past outputs received from the other
//! user). The table index is the mixed-radix number formed by the tapped
//! values, first tap most significant.
//!
//! The default tap list is the user's complete history in canonical order
//! (source block, then for every earlier active slot the own input followed
//! by the received output). Transformed codes keep narrower tap lists so
//! that lifted codes stay small.
//!
//! A [`StaggeredCode`] is the round-based form where the two directions
//! alternate; [`StaggeredCode::to_general`] expands it slot by slot.

mod exact;
mod exec;
mod random;
mod staggered;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use exact::{exact_distortions, exact_joint, JOINT_RECON1, JOINT_RECON2};
pub use exec::{execute_monte_carlo, ExecutionTrace, MonteCarloResult};
pub(crate) use exec::mean_stderr;
pub use random::{random_general, random_staggered, GeneralCodeParams};
pub use staggered::StaggeredCode;
pub use transform::{
    boundary_pad, padding_overhead, repetition_lift, stagger_transform, staggered_reduction,
    MAX_LIFTED_LENGTH,
};

/// One of the two communicating parties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum User {
    One,
    Two,
}

impl User {
    pub fn other(self) -> User {
        match self {
            User::One => User::Two,
            User::Two => User::One,
        }
    }
}

/// A reference into one user's local history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tap {
    /// Own source symbol at a block position.
    Source(usize),
    /// Own channel input at a slot.
    Sent(usize),
    /// Output of the other user's channel at a slot.
    Received(usize),
}

impl Tap {
    fn map_slots(self, f: impl Fn(usize) -> usize) -> Tap {
        match self {
            Tap::Source(t) => Tap::Source(t),
            Tap::Sent(j) => Tap::Sent(f(j)),
            Tap::Received(j) => Tap::Received(f(j)),
        }
    }
}

/// Alphabet sizes of a code: sources, reconstructions, and both channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabets {
    pub source1: usize,
    pub source2: usize,
    /// Alphabet of the estimate of X1 (formed at User 2).
    pub recon1: usize,
    /// Alphabet of the estimate of X2 (formed at User 1).
    pub recon2: usize,
    pub input1: usize,
    pub output1: usize,
    pub input2: usize,
    pub output2: usize,
}

impl Alphabets {
    /// All alphabets binary.
    pub fn binary() -> Self {
        Self::uniform(2)
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            source1: k,
            source2: k,
            recon1: k,
            recon2: k,
            input1: k,
            output1: k,
            input2: k,
            output2: k,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [
            self.source1,
            self.source2,
            self.recon1,
            self.recon2,
            self.input1,
            self.output1,
            self.input2,
            self.output2,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidCode("alphabet sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// Radix of a tap read by `user`.
    pub fn tap_radix(&self, user: User, tap: Tap) -> usize {
        match (user, tap) {
            (User::One, Tap::Source(_)) => self.source1,
            (User::One, Tap::Sent(_)) => self.input1,
            (User::One, Tap::Received(_)) => self.output2,
            (User::Two, Tap::Source(_)) => self.source2,
            (User::Two, Tap::Sent(_)) => self.input2,
            (User::Two, Tap::Received(_)) => self.output1,
        }
    }

    /// Channel input alphabet used by `user`.
    pub fn input(&self, user: User) -> usize {
        match user {
            User::One => self.input1,
            User::Two => self.input2,
        }
    }

    /// Alphabet of the estimate formed at `user` (of the other user's source).
    pub fn recon_at(&self, user: User) -> usize {
        match user {
            User::One => self.recon2,
            User::Two => self.recon1,
        }
    }
}

/// Slot activity flags.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub c1: Vec<bool>,
    pub c2: Vec<bool>,
}

impl Schedule {
    pub fn new(c1: Vec<bool>, c2: Vec<bool>) -> Result<Self> {
        let s = Self { c1, c2 };
        s.validate()?;
        Ok(s)
    }

    /// Builds a schedule from 0/1 vectors.
    pub fn from_bits(c1: &[u8], c2: &[u8]) -> Result<Self> {
        Self::new(
            c1.iter().map(|&b| b != 0).collect(),
            c2.iter().map(|&b| b != 0).collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.c1.len() != self.c2.len() {
            return Err(Error::InvalidCode(format!(
                "schedule rows have lengths {} and {}",
                self.c1.len(),
                self.c2.len()
            )));
        }
        if self.c1.is_empty() {
            return Err(Error::InvalidCode("time horizon must be >= 1".into()));
        }
        if let Some(i) = (0..self.c1.len()).find(|&i| !self.c1[i] && !self.c2[i]) {
            return Err(Error::InvalidCode(format!("slot {i} has no active direction")));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.c1.len()
    }

    pub fn active(&self, user: User, slot: usize) -> bool {
        match user {
            User::One => self.c1[slot],
            User::Two => self.c2[slot],
        }
    }

    /// Number of channel uses (c1 count, c2 count).
    pub fn uses(&self) -> (usize, usize) {
        (
            self.c1.iter().filter(|&&b| b).count(),
            self.c2.iter().filter(|&&b| b).count(),
        )
    }

    /// Exactly one direction per slot, first slot from User 1, last from User 2.
    pub fn is_staggered(&self) -> bool {
        let n = self.horizon();
        (0..n).all(|i| self.c1[i] != self.c2[i]) && self.c1[0] && self.c2[n - 1]
    }

    /// True when some slot uses both directions.
    pub fn has_simultaneous_slot(&self) -> bool {
        self.c1.iter().zip(&self.c2).any(|(a, b)| *a && *b)
    }
}

/// A deterministic encoder: table over the tapped history values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lookup {
    pub taps: Vec<Tap>,
    pub table: Vec<u32>,
}

impl Lookup {
    /// An encoder that ignores its history.
    pub fn constant(symbol: u32) -> Self {
        Self {
            taps: Vec::new(),
            table: vec![symbol],
        }
    }
}

/// One piece of a decoder: reconstructs `positions` from its taps. The table
/// entry is the mixed-radix reconstruction block, first position most
/// significant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderPart {
    pub positions: Vec<usize>,
    pub taps: Vec<Tap>,
    pub table: Vec<u32>,
}

/// A decoder; its parts partition the block positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoder {
    pub parts: Vec<DecoderPart>,
}

/// A block-length-n scheduled two-way code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralCode {
    pub n: usize,
    pub alphabets: Alphabets,
    pub schedule: Schedule,
    /// User 1's encoder per slot; present iff `c1[i]`.
    pub encoders1: Vec<Option<Lookup>>,
    /// User 2's encoder per slot; present iff `c2[i]`.
    pub encoders2: Vec<Option<Lookup>>,
    /// Decoder run at User 2, estimating X1.
    pub estimate_x1: Decoder,
    /// Decoder run at User 1, estimating X2.
    pub estimate_x2: Decoder,
}

/// Mixed-radix pack, first digit most significant.
pub(crate) fn pack(digits: &[usize], radix: usize) -> usize {
    digits.iter().fold(0, |acc, &d| acc * radix + d)
}

/// Inverse of [`pack`] for `len` digits.
pub(crate) fn unpack(mut idx: usize, radix: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % radix;
        idx /= radix;
    }
    out
}

fn table_len(alph: &Alphabets, user: User, taps: &[Tap]) -> Result<usize> {
    let mut len: u128 = 1;
    for &t in taps {
        len = len.saturating_mul(alph.tap_radix(user, t) as u128);
    }
    if len > crate::infotheory::MAX_CELLS as u128 {
        return Err(Error::TooLarge {
            required: len,
            ceiling: crate::infotheory::MAX_CELLS as u128,
        });
    }
    Ok(len as usize)
}

impl GeneralCode {
    /// Validates and wraps the parts of a code.
    pub fn new(
        n: usize,
        alphabets: Alphabets,
        schedule: Schedule,
        encoders1: Vec<Option<Lookup>>,
        encoders2: Vec<Option<Lookup>>,
        estimate_x1: Decoder,
        estimate_x2: Decoder,
    ) -> Result<Self> {
        let code = Self {
            n,
            alphabets,
            schedule,
            encoders1,
            encoders2,
            estimate_x1,
            estimate_x2,
        };
        code.validate()?;
        Ok(code)
    }

    pub fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    pub fn encoders(&self, user: User) -> &[Option<Lookup>] {
        match user {
            User::One => &self.encoders1,
            User::Two => &self.encoders2,
        }
    }

    /// Decoder run at `user`.
    pub fn decoder_at(&self, user: User) -> &Decoder {
        match user {
            User::One => &self.estimate_x2,
            User::Two => &self.estimate_x1,
        }
    }

    /// Channel uses per source symbol, (Σ c1 / n, Σ c2 / n).
    pub fn rates(&self) -> (f64, f64) {
        let (a, b) = self.schedule.uses();
        (a as f64 / self.n as f64, b as f64 / self.n as f64)
    }

    /// Checks every structural invariant: schedule, encoder presence, tap
    /// causality and locality, table totality, decoder coverage.
    pub fn validate(&self) -> Result<()> {
        self.alphabets.validate()?;
        self.schedule.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidCode("block length must be >= 1".into()));
        }
        let horizon = self.horizon();
        for user in [User::One, User::Two] {
            let encs = self.encoders(user);
            if encs.len() != horizon {
                return Err(Error::InvalidCode(format!(
                    "{user:?} has {} encoder slots, horizon is {horizon}",
                    encs.len()
                )));
            }
            for (i, enc) in encs.iter().enumerate() {
                match (self.schedule.active(user, i), enc) {
                    (true, Some(l)) => {
                        self.check_taps(user, &l.taps, i)?;
                        self.check_table(user, &l.taps, &l.table, self.alphabets.input(user))
                            .map_err(|e| Error::InvalidCode(format!("{user:?} slot {i}: {e}")))?;
                    }
                    (false, None) => {}
                    (true, None) => {
                        return Err(Error::InvalidCode(format!(
                            "{user:?} is scheduled in slot {i} but has no encoder"
                        )))
                    }
                    (false, Some(_)) => {
                        return Err(Error::InvalidCode(format!(
                            "{user:?} has an encoder in idle slot {i}"
                        )))
                    }
                }
            }
            let dec = self.decoder_at(user);
            let mut covered = vec![false; self.n];
            for part in &dec.parts {
                self.check_taps(user, &part.taps, horizon)?;
                let block_radix = (self.alphabets.recon_at(user) as u128)
                    .checked_pow(part.positions.len() as u32)
                    .filter(|&r| r <= u32::MAX as u128 + 1)
                    .ok_or_else(|| Error::InvalidCode("decoder part too wide".into()))?;
                self.check_table(user, &part.taps, &part.table, block_radix as usize)
                    .map_err(|e| Error::InvalidCode(format!("{user:?} decoder: {e}")))?;
                for &p in &part.positions {
                    if p >= self.n || covered[p] {
                        return Err(Error::InvalidCode(format!(
                            "{user:?} decoder covers position {p} twice or out of range"
                        )));
                    }
                    covered[p] = true;
                }
            }
            if covered.iter().any(|c| !c) {
                return Err(Error::InvalidCode(format!(
                    "{user:?} decoder leaves positions unreconstructed"
                )));
            }
        }
        Ok(())
    }

    /// Taps must refer to this user's own block and to strictly earlier,
    /// active slots in the right direction.
    fn check_taps(&self, user: User, taps: &[Tap], before: usize) -> Result<()> {
        for &t in taps {
            let ok = match t {
                Tap::Source(p) => p < self.n,
                Tap::Sent(j) => j < before && self.schedule.active(user, j),
                Tap::Received(j) => j < before && self.schedule.active(user.other(), j),
            };
            if !ok {
                return Err(Error::InvalidCode(format!(
                    "{user:?} tap {t:?} is not available before slot {before}"
                )));
            }
        }
        Ok(())
    }

    fn check_table(&self, user: User, taps: &[Tap], table: &[u32], range: usize) -> Result<()> {
        let len = table_len(&self.alphabets, user, taps)?;
        if table.len() != len {
            return Err(Error::InvalidCode(format!(
                "table has {} entries, taps need {len}",
                table.len()
            )));
        }
        if let Some(bad) = table.iter().find(|&&v| v as usize >= range) {
            return Err(Error::InvalidCode(format!(
                "table entry {bad} out of range {range}"
            )));
        }
        Ok(())
    }

    /// Canonical complete history of `user` before slot `slot` (or at the end
    /// when `slot == horizon`).
    pub fn full_history_taps(&self, user: User, slot: usize) -> Vec<Tap> {
        full_history_taps(&self.schedule, self.n, user, slot)
    }

    /// Serializes to JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("code serializes")
    }

    /// Parses and validates a JSON code.
    pub fn from_json(text: &str) -> Result<Self> {
        let code: GeneralCode = serde_json::from_str(text)
            .map_err(|e| Error::InvalidCode(format!("parse error: {e}")))?;
        code.validate()?;
        Ok(code)
    }

    /// Checks that the code's alphabets agree with the source, channels
    /// and distortion measures it will run against.
    pub fn check_compatible(
        &self,
        source: &crate::source::JointSource,
        ch1: &crate::channel::Dmc,
        ch2: &crate::channel::Dmc,
    ) -> Result<()> {
        let a = &self.alphabets;
        let pairs = [
            ("source 1", a.source1, source.size1()),
            ("source 2", a.source2, source.size2()),
            ("channel 1 input", a.input1, ch1.input_size()),
            ("channel 1 output", a.output1, ch1.output_size()),
            ("channel 2 input", a.input2, ch2.input_size()),
            ("channel 2 output", a.output2, ch2.output_size()),
        ];
        for (what, code, actual) in pairs {
            if code != actual {
                return Err(Error::AlphabetMismatch(format!(
                    "{what}: code expects {code}, got {actual}"
                )));
            }
        }
        Ok(())
    }

    /// Round structure `(user, first slot, length)` of a staggered-shaped code.
    pub fn rounds(&self) -> Result<Vec<(User, usize, usize)>> {
        if !self.schedule.is_staggered() {
            return Err(Error::NotStaggered(
                "needs one direction per slot, User 1 first and User 2 last".into(),
            ));
        }
        let mut rounds: Vec<(User, usize, usize)> = Vec::new();
        for i in 0..self.horizon() {
            let user = if self.schedule.c1[i] { User::One } else { User::Two };
            match rounds.last_mut() {
                Some((u, _, len)) if *u == user => *len += 1,
                _ => rounds.push((user, i, 1)),
            }
        }
        Ok(rounds)
    }
}

pub(crate) fn full_history_taps(schedule: &Schedule, n: usize, user: User, slot: usize) -> Vec<Tap> {
    let mut taps: Vec<Tap> = (0..n).map(Tap::Source).collect();
    for j in 0..slot {
        if schedule.active(user, j) {
            taps.push(Tap::Sent(j));
        }
        if schedule.active(user.other(), j) {
            taps.push(Tap::Received(j));
        }
    }
    taps
}

/// Decoder with a single part over the complete terminal history.
pub(crate) fn full_decoder(schedule: &Schedule, n: usize, user: User, table: Vec<u32>) -> Decoder {
    Decoder {
        parts: vec![DecoderPart {
            positions: (0..n).collect(),
            taps: full_history_taps(schedule, n, user, schedule.horizon()),
            table,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relay() -> GeneralCode {
        // n = 1, one User-1 slot forwarding x1, one User-2 slot forwarding x2.
        let schedule = Schedule::from_bits(&[1, 0], &[0, 1]).unwrap();
        GeneralCode::new(
            1,
            Alphabets::binary(),
            schedule.clone(),
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
            Decoder {
                parts: vec![DecoderPart {
                    positions: vec![0],
                    taps: vec![Tap::Received(0)],
                    table: vec![0, 1],
                }],
            },
            Decoder {
                parts: vec![DecoderPart {
                    positions: vec![0],
                    taps: vec![Tap::Received(1)],
                    table: vec![0, 1],
                }],
            },
        )
        .unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(Schedule::from_bits(&[1, 0], &[0, 0]).is_err());
        assert!(Schedule::from_bits(&[1], &[0, 1]).is_err());
        let s = Schedule::from_bits(&[1, 1, 0], &[0, 1, 1]).unwrap();
        assert_eq!(s.uses(), (2, 2));
        assert!(!s.is_staggered());
        assert!(s.has_simultaneous_slot());
    }

    #[test]
    fn rates_count_channel_uses() {
        let code = relay();
        assert_eq!(code.rates(), (1.0, 1.0));
        assert_eq!(
            code.rounds().unwrap(),
            vec![(User::One, 0, 1), (User::Two, 1, 1)]
        );
    }

    #[test]
    fn rejects_non_causal_and_misdirected_taps() {
        let mut code = relay();
        code.encoders2[1] = Some(Lookup {
            taps: vec![Tap::Received(1)],
            table: vec![0, 1],
        });
        assert!(matches!(code.validate(), Err(Error::InvalidCode(_))));
        let mut code = relay();
        // User 1 never receives in slot 0
        code.estimate_x2.parts[0].taps = vec![Tap::Received(0)];
        assert!(code.validate().is_err());
        let mut code = relay();
        code.encoders1[0].as_mut().unwrap().table = vec![0, 2];
        assert!(code.validate().is_err());
        let mut code = relay();
        code.encoders1[1] = Some(Lookup::constant(0));
        assert!(code.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let code = relay();
        let back = GeneralCode::from_json(&code.to_json()).unwrap();
        assert_eq!(back, code);
        assert!(GeneralCode::from_json("{\"n\": 1}").is_err());
    }

    #[test]
    fn full_history_is_canonical() {
        let s = Schedule::from_bits(&[1, 1, 0], &[0, 1, 1]).unwrap();
        assert_eq!(
            full_history_taps(&s, 2, User::Two, 2),
            vec![
                Tap::Source(0),
                Tap::Source(1),
                Tap::Received(0),
                Tap::Sent(1),
                Tap::Received(1)
            ]
        );
    }

    #[test]
    fn pack_unpack() {
        assert_eq!(pack(&[1, 0, 1], 2), 5);
        assert_eq!(unpack(5, 2, 3), vec![1, 0, 1]);
        assert_eq!(unpack(pack(&[2, 0, 1], 3), 3, 3), vec![2, 0, 1]);
    }
}

use serde::{Deserialize, Serialize};

use super::{full_decoder, full_history_taps, unpack, Alphabets, GeneralCode, Lookup, Schedule, User};
use crate::error::{Error, Result};

/// Round-based code with alternating directions. Round `k` (0-based) is
/// sent by User 1 when `k` is even. Each round encoder maps the sender's
/// complete history at the start of the round to a block of
/// `round_lengths[k]` channel inputs (mixed radix, first symbol most
/// significant). Histories are the own source block followed by each
/// earlier round block in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaggeredCode {
    pub n: usize,
    pub alphabets: Alphabets,
    pub round_lengths: Vec<usize>,
    pub round_encoders: Vec<Vec<u32>>,
    /// At User 2, over its terminal history.
    pub estimate_x1: Vec<u32>,
    /// At User 1, over its terminal history.
    pub estimate_x2: Vec<u32>,
}

impl StaggeredCode {
    pub fn rounds(&self) -> usize {
        self.round_lengths.len()
    }

    pub fn round_user(k: usize) -> User {
        if k % 2 == 0 {
            User::One
        } else {
            User::Two
        }
    }

    pub fn rates(&self) -> (f64, f64) {
        let mut a = 0;
        let mut b = 0;
        for (k, &len) in self.round_lengths.iter().enumerate() {
            match Self::round_user(k) {
                User::One => a += len,
                User::Two => b += len,
            }
        }
        (a as f64 / self.n as f64, b as f64 / self.n as f64)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        for (k, &len) in self.round_lengths.iter().enumerate() {
            let one = Self::round_user(k) == User::One;
            c1.extend(std::iter::repeat(one).take(len));
            c2.extend(std::iter::repeat(!one).take(len));
        }
        let s = Schedule::new(c1, c2)?;
        if !s.is_staggered() {
            return Err(Error::NotStaggered(
                "round lengths must be >= 1 and the round count even".into(),
            ));
        }
        Ok(s)
    }

    /// Expands into slot-level lookups. Within a round every slot reads the
    /// round-start history; slot `o` emits digit `o` of the round block.
    pub fn to_general(&self) -> Result<GeneralCode> {
        if self.round_encoders.len() != self.rounds() {
            return Err(Error::InvalidCode(format!(
                "{} round encoders for {} rounds",
                self.round_encoders.len(),
                self.rounds()
            )));
        }
        let schedule = self.schedule()?;
        let horizon = schedule.horizon();
        let mut encoders1 = vec![None; horizon];
        let mut encoders2 = vec![None; horizon];
        let mut start = 0;
        for (k, &len) in self.round_lengths.iter().enumerate() {
            let user = Self::round_user(k);
            let radix = self.alphabets.input(user);
            let taps = full_history_taps(&schedule, self.n, user, start);
            let table = &self.round_encoders[k];
            for o in 0..len {
                let lookup = Lookup {
                    taps: taps.clone(),
                    table: table
                        .iter()
                        .map(|&b| unpack(b as usize, radix, len)[o] as u32)
                        .collect(),
                };
                match user {
                    User::One => encoders1[start + o] = Some(lookup),
                    User::Two => encoders2[start + o] = Some(lookup),
                }
            }
            start += len;
        }
        GeneralCode::new(
            self.n,
            self.alphabets,
            schedule.clone(),
            encoders1,
            encoders2,
            full_decoder(&schedule, self.n, User::Two, self.estimate_x1.clone()),
            full_decoder(&schedule, self.n, User::One, self.estimate_x2.clone()),
        )
    }
}

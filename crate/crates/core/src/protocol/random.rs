use rand::Rng;

use super::{
    full_decoder, full_history_taps, table_len, Alphabets, GeneralCode, Lookup, Schedule,
    StaggeredCode, User,
};
use crate::error::{Error, Result};
use crate::infotheory::MAX_CELLS;

fn pow_checked(base: usize, exp: usize) -> Result<usize> {
    (base as u128)
        .checked_pow(exp as u32)
        .filter(|&v| v <= MAX_CELLS as u128)
        .map(|v| v as usize)
        .ok_or(Error::TooLarge {
            required: u128::MAX,
            ceiling: MAX_CELLS as u128,
        })
}

fn random_table<R: Rng + ?Sized>(len: usize, range: usize, rng: &mut R) -> Vec<u32> {
    (0..len).map(|_| rng.gen_range(0..range) as u32).collect()
}

/// Staggered code with uniformly random round and decoder tables.
pub fn random_staggered<R: Rng + ?Sized>(
    n: usize,
    round_lengths: &[usize],
    alphabets: Alphabets,
    rng: &mut R,
) -> Result<StaggeredCode> {
    if n == 0 || round_lengths.is_empty() || round_lengths.contains(&0) {
        return Err(Error::InvalidArgument(
            "block length and round lengths must be >= 1".into(),
        ));
    }
    let a = alphabets;
    let source = |u: User| match u {
        User::One => a.source1,
        User::Two => a.source2,
    };
    let received = |u: User| match u {
        User::One => a.output2,
        User::Two => a.output1,
    };
    let history = |u: User, rounds: usize| -> Result<usize> {
        let mut size = pow_checked(source(u), n)?;
        for (j, &len) in round_lengths[..rounds].iter().enumerate() {
            let radix = if StaggeredCode::round_user(j) == u {
                a.input(u)
            } else {
                received(u)
            };
            size = size
                .checked_mul(pow_checked(radix, len)?)
                .filter(|&s| s <= MAX_CELLS)
                .ok_or(Error::TooLarge {
                    required: u128::MAX,
                    ceiling: MAX_CELLS as u128,
                })?;
        }
        Ok(size)
    };
    let mut round_encoders = Vec::new();
    for (k, &len) in round_lengths.iter().enumerate() {
        let u = StaggeredCode::round_user(k);
        let size = history(u, k)?;
        round_encoders.push(random_table(size, pow_checked(a.input(u), len)?, rng));
    }
    let q = round_lengths.len();
    let estimate_x1 = random_table(history(User::Two, q)?, pow_checked(a.recon1, n)?, rng);
    let estimate_x2 = random_table(history(User::One, q)?, pow_checked(a.recon2, n)?, rng);
    Ok(StaggeredCode {
        n,
        alphabets,
        round_lengths: round_lengths.to_vec(),
        round_encoders,
        estimate_x1,
        estimate_x2,
    })
}

/// Shape of a random general code.
#[derive(Clone, Copy, Debug)]
pub struct GeneralCodeParams {
    pub n: usize,
    pub horizon: usize,
    pub alphabets: Alphabets,
    /// Force at least one slot where both users transmit.
    pub simultaneous: bool,
}

/// General code with a random schedule and uniformly random full-history
/// tables.
pub fn random_general<R: Rng + ?Sized>(p: &GeneralCodeParams, rng: &mut R) -> Result<GeneralCode> {
    if p.n == 0 || p.horizon == 0 {
        return Err(Error::InvalidArgument(
            "block length and horizon must be >= 1".into(),
        ));
    }
    let mut c1 = Vec::with_capacity(p.horizon);
    let mut c2 = Vec::with_capacity(p.horizon);
    for _ in 0..p.horizon {
        match rng.gen_range(0..3) {
            0 => {
                c1.push(true);
                c2.push(false)
            }
            1 => {
                c1.push(false);
                c2.push(true)
            }
            _ => {
                c1.push(true);
                c2.push(true)
            }
        }
    }
    if p.simultaneous && !c1.iter().zip(&c2).any(|(a, b)| *a && *b) {
        let i = rng.gen_range(0..p.horizon);
        c1[i] = true;
        c2[i] = true;
    }
    let schedule = Schedule::new(c1, c2)?;
    let a = p.alphabets;
    let mut encoders = [vec![None; p.horizon], vec![None; p.horizon]];
    for (ui, user) in [User::One, User::Two].into_iter().enumerate() {
        for i in 0..p.horizon {
            if schedule.active(user, i) {
                let taps = full_history_taps(&schedule, p.n, user, i);
                let len = table_len(&a, user, &taps)?;
                let table = random_table(len, a.input(user), rng);
                encoders[ui][i] = Some(Lookup { taps, table });
            }
        }
    }
    let mut decoder = |user: User| -> Result<_> {
        let taps = full_history_taps(&schedule, p.n, user, p.horizon);
        let len = table_len(&a, user, &taps)?;
        let table = random_table(len, pow_checked(a.recon_at(user), p.n)?, rng);
        Ok(full_decoder(&schedule, p.n, user, table))
    };
    let estimate_x1 = decoder(User::Two)?;
    let estimate_x2 = decoder(User::One)?;
    let [encoders1, encoders2] = encoders;
    GeneralCode::new(
        p.n,
        a,
        schedule,
        encoders1,
        encoders2,
        estimate_x1,
        estimate_x2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn random_codes_validate() {
        let mut r = rng::stream(11, 0);
        for _ in 0..20 {
            let code = random_general(
                &GeneralCodeParams {
                    n: 2,
                    horizon: 3,
                    alphabets: Alphabets::binary(),
                    simultaneous: true,
                },
                &mut r,
            )
            .unwrap();
            assert!(code.schedule.has_simultaneous_slot());
            code.validate().unwrap();
        }
        let s = random_staggered(1, &[2, 1, 1, 2], Alphabets::uniform(3), &mut r).unwrap();
        let g = s.to_general().unwrap();
        assert_eq!(g.rates(), (3.0, 3.0));
    }

    #[test]
    fn oversized_tables_are_refused() {
        let mut r = rng::stream(11, 1);
        let err = random_staggered(30, &[1, 1], Alphabets::binary(), &mut r).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }
}

//! Code transformations: repetition lifting, boundary padding, and the
//! split of simultaneous slots into alternating ones.

use super::{Decoder, DecoderPart, GeneralCode, Lookup, Schedule, Tap, User};
use crate::error::{Error, Result};

/// Largest block length or horizon a lift may produce.
pub const MAX_LIFTED_LENGTH: usize = 1 << 16;

fn remap_lookup(l: &Lookup, f: impl Fn(Tap) -> Tap) -> Lookup {
    Lookup {
        taps: l.taps.iter().map(|&t| f(t)).collect(),
        table: l.table.clone(),
    }
}

fn remap_decoder(d: &Decoder, pos: impl Fn(usize) -> usize, f: impl Fn(Tap) -> Tap) -> Decoder {
    Decoder {
        parts: d
            .parts
            .iter()
            .map(|p| DecoderPart {
                positions: p.positions.iter().map(|&i| pos(i)).collect(),
                taps: p.taps.iter().map(|&t| f(t)).collect(),
                table: p.table.clone(),
            })
            .collect(),
    }
}

/// Runs the code `h` times back to back on consecutive sub-blocks. Block
/// length becomes `n*h` and horizon `N*h`; copy `k` reads only its own
/// sub-block and slots.
pub fn repetition_lift(code: &GeneralCode, h: usize) -> Result<GeneralCode> {
    if h == 0 {
        return Err(Error::InvalidArgument("lift factor must be >= 1".into()));
    }
    let n = code.n;
    let horizon = code.horizon();
    let (big_n, big_h) = match (n.checked_mul(h), horizon.checked_mul(h)) {
        (Some(a), Some(b)) if a <= MAX_LIFTED_LENGTH && b <= MAX_LIFTED_LENGTH => (a, b),
        _ => {
            return Err(Error::TooLarge {
                required: (n.max(horizon) as u128) * h as u128,
                ceiling: MAX_LIFTED_LENGTH as u128,
            })
        }
    };
    let shift = |k: usize| {
        move |t: Tap| match t {
            Tap::Source(p) => Tap::Source(p + k * n),
            other => other.map_slots(|j| j + k * horizon),
        }
    };
    let mut c1 = Vec::with_capacity(big_h);
    let mut c2 = Vec::with_capacity(big_h);
    let mut e1 = Vec::with_capacity(big_h);
    let mut e2 = Vec::with_capacity(big_h);
    let mut x1 = Decoder { parts: Vec::new() };
    let mut x2 = Decoder { parts: Vec::new() };
    for k in 0..h {
        c1.extend_from_slice(&code.schedule.c1);
        c2.extend_from_slice(&code.schedule.c2);
        e1.extend(code.encoders1.iter().map(|e| e.as_ref().map(|l| remap_lookup(l, shift(k)))));
        e2.extend(code.encoders2.iter().map(|e| e.as_ref().map(|l| remap_lookup(l, shift(k)))));
        x1.parts
            .extend(remap_decoder(&code.estimate_x1, |p| p + k * n, shift(k)).parts);
        x2.parts
            .extend(remap_decoder(&code.estimate_x2, |p| p + k * n, shift(k)).parts);
    }
    GeneralCode::new(
        big_n,
        code.alphabets,
        Schedule::new(c1, c2)?,
        e1,
        e2,
        x1,
        x2,
    )
}

/// Adds a constant User-1 slot in front when the first slot has no User-1
/// transmission and a constant User-2 slot at the end when the last slot
/// has no User-2 transmission. Nothing reads the added slots, so
/// distortions are unchanged.
pub fn boundary_pad(code: &GeneralCode) -> Result<GeneralCode> {
    let horizon = code.horizon();
    let front = !code.schedule.c1[0];
    let back = !code.schedule.c2[horizon - 1];
    let off = front as usize;
    let shift = |t: Tap| t.map_slots(|j| j + off);
    let mut c1 = Vec::new();
    let mut c2 = Vec::new();
    let mut e1 = Vec::new();
    let mut e2 = Vec::new();
    if front {
        c1.push(true);
        c2.push(false);
        e1.push(Some(Lookup::constant(0)));
        e2.push(None);
    }
    c1.extend_from_slice(&code.schedule.c1);
    c2.extend_from_slice(&code.schedule.c2);
    e1.extend(code.encoders1.iter().map(|e| e.as_ref().map(|l| remap_lookup(l, shift))));
    e2.extend(code.encoders2.iter().map(|e| e.as_ref().map(|l| remap_lookup(l, shift))));
    if back {
        c1.push(false);
        c2.push(true);
        e1.push(None);
        e2.push(Some(Lookup::constant(0)));
    }
    GeneralCode::new(
        code.n,
        code.alphabets,
        Schedule::new(c1, c2)?,
        e1,
        e2,
        remap_decoder(&code.estimate_x1, |p| p, shift),
        remap_decoder(&code.estimate_x2, |p| p, shift),
    )
}

/// Splits every slot with both directions active into a User-1 slot
/// followed by a User-2 slot. Every encoder and decoder reads exactly the
/// same information as before, so the joint law of sources and
/// reconstructions is unchanged and the rates are identical.
pub fn stagger_transform(code: &GeneralCode) -> Result<GeneralCode> {
    let horizon = code.horizon();
    if !code.schedule.c1[0] || !code.schedule.c2[horizon - 1] {
        let what = if !code.schedule.c1[0] {
            "User 1 is idle in the first slot"
        } else {
            "User 2 is idle in the last slot"
        };
        return Err(Error::StaggerPrecondition(what.into()));
    }
    let mut map1 = vec![usize::MAX; horizon];
    let mut map2 = vec![usize::MAX; horizon];
    let mut next = 0;
    for i in 0..horizon {
        if code.schedule.c1[i] {
            map1[i] = next;
            next += 1;
        }
        if code.schedule.c2[i] {
            map2[i] = next;
            next += 1;
        }
    }
    let remap = |user: User| {
        let (own, other) = match user {
            User::One => (&map1, &map2),
            User::Two => (&map2, &map1),
        };
        move |t: Tap| match t {
            Tap::Source(p) => Tap::Source(p),
            Tap::Sent(j) => Tap::Sent(own[j]),
            Tap::Received(j) => Tap::Received(other[j]),
        }
    };
    let mut c1 = vec![false; next];
    let mut c2 = vec![false; next];
    let mut e1 = vec![None; next];
    let mut e2 = vec![None; next];
    for i in 0..horizon {
        if let Some(l) = &code.encoders1[i] {
            c1[map1[i]] = true;
            e1[map1[i]] = Some(remap_lookup(l, remap(User::One)));
        }
        if let Some(l) = &code.encoders2[i] {
            c2[map2[i]] = true;
            e2[map2[i]] = Some(remap_lookup(l, remap(User::Two)));
        }
    }
    GeneralCode::new(
        code.n,
        code.alphabets,
        Schedule::new(c1, c2)?,
        e1,
        e2,
        remap_decoder(&code.estimate_x1, |p| p, remap(User::Two)),
        remap_decoder(&code.estimate_x2, |p| p, remap(User::One)),
    )
}

/// Rate overhead of `pad_slots` padding slots amortized over a lift by `h`
/// of a length-`n` code.
pub fn padding_overhead(pad_slots: usize, n: usize, h: usize) -> f64 {
    pad_slots as f64 / (n as f64 * h as f64)
}

/// Lift, pad and stagger: a staggered code with the same per-letter
/// distortions whose rates exceed the original by at most `epsilon` in
/// each direction.
pub fn staggered_reduction(code: &GeneralCode, epsilon: f64) -> Result<GeneralCode> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let needs_pad = !code.schedule.c1[0] || !code.schedule.c2[code.horizon() - 1];
    let h = if needs_pad {
        (1.0 / (code.n as f64 * epsilon)).ceil().max(1.0) as usize
    } else {
        1
    };
    stagger_transform(&boundary_pad(&repetition_lift(code, h)?)?)
}

//! Brute-force tail probabilities: every channel-bit realisation of the
//! first `n` transmissions is weighted and replayed against the decoder.
//! Generic over the weight type so the sum can be carried out in exact
//! rational arithmetic.

use std::ops::{Add, Mul};

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::protocols::{decode_threshold, trunk_start, DecoderMode};

/// Largest number of channel bits enumerated.
pub const MAX_BITS: u64 = 22;

pub trait Weight: Clone + Zero + One + Add<Output = Self> + Mul<Output = Self> {
    fn from_f64(x: f64) -> Self;
}

impl Weight for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
}

impl Weight for BigRational {
    /// Exact value of the binary float.
    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite probability")
    }
}

struct Slot {
    pos: u32,
    /// Last bit of a transmission: the decoder checks after it.
    ends_round: bool,
}

struct Walk<'a, W> {
    spec: &'a ChannelSpec,
    probs: Vec<Vec<(usize, W, bool)>>,
    slots: Vec<Slot>,
    need: u32,
    forget: bool,
}

impl<W: Weight> Walk<'_, W> {
    fn descend(&self, depth: usize, alpha: &[W], mask: u32) -> W {
        if depth == self.slots.len() {
            return alpha.iter().cloned().fold(W::zero(), |a, b| a + b);
        }
        let slot = &self.slots[depth];
        let d = self.spec.num_states();
        let mut total = W::zero();
        for bit in [false, true] {
            let mut next = vec![W::zero(); d];
            let mut any = false;
            for (s, a) in alpha.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (u, p, b) in &self.probs[s] {
                    if *b == bit {
                        next[*u] = next[*u].clone() + a.clone() * p.clone();
                        any = true;
                    }
                }
            }
            if !any {
                continue;
            }
            let mut m = if bit { mask | (1 << slot.pos) } else { mask };
            if slot.ends_round {
                if m.count_ones() >= self.need {
                    continue;
                }
                if self.forget {
                    m = 0;
                }
            }
            total = total + self.descend(depth + 1, &next, m);
        }
        total
    }
}

/// `P[N > n | L = l]` by full enumeration of `l·n` (no-memory) or the
/// scheduled trunk bits (memory) channel outcomes.
pub fn enumerate_tail<W: Weight>(
    spec: &ChannelSpec,
    l: u64,
    beta: f64,
    n: u64,
    mode: DecoderMode,
    r: u32,
) -> Result<W> {
    if l == 0 || l > 32 {
        return Err(Error::param("l", "enumeration needs 1 <= l <= 32"));
    }
    let r = if mode == DecoderMode::NoMemory { 1 } else { r.max(1) };
    let mut slots = Vec::new();
    for h in 0..n {
        let j = (h % r as u64) as u32;
        let (lo, hi) = (trunk_start(l, r, j), trunk_start(l, r, j + 1));
        for pos in lo..hi {
            slots.push(Slot {
                pos: pos as u32,
                ends_round: pos + 1 == hi,
            });
        }
        if slots.len() as u64 > MAX_BITS {
            return Err(Error::ResourceLimit(format!(
                "enumeration over more than {MAX_BITS} channel bits"
            )));
        }
    }
    let probs = (0..spec.num_states())
        .map(|s| {
            spec.steps(s)
                .iter()
                .map(|st| (st.next, W::from_f64(st.prob), st.bit))
                .collect()
        })
        .collect();
    let walk = Walk {
        spec,
        probs,
        slots,
        need: decode_threshold(beta, l) as u32,
        forget: mode == DecoderMode::NoMemory,
    };
    let alpha: Vec<W> = spec
        .stationary_distribution()
        .iter()
        .map(|p| W::from_f64(*p))
        .collect();
    Ok(walk.descend(0, &alpha, 0))
}

//! Forward recursions over the channel chain for exact tail probabilities.

use crate::channel::ChannelSpec;

use super::binomial;

/// One no-memory attempt of `l` bits from the channel-state law `init`.
///
/// Returns the failure mass split by the channel state at the end of the
/// attempt, and the total success mass. Counts saturate at `need`, so the
/// success mass is accumulated directly rather than as a complement.
pub(crate) fn attempt(spec: &ChannelSpec, init: &[f64], l: u64, need: u64) -> (Vec<f64>, f64) {
    let d = spec.num_states();
    let w = need as usize + 1;
    let mut cur = vec![0.0; d * w];
    for (s, p) in init.iter().enumerate() {
        cur[s * w] = *p;
    }
    let mut next = vec![0.0; d * w];
    for _ in 0..l {
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..d {
            for c in 0..w {
                let mass = cur[s * w + c];
                if mass == 0.0 {
                    continue;
                }
                for st in spec.steps(s) {
                    let c2 = (c + st.bit as usize).min(w - 1);
                    next[st.next * w + c2] += mass * st.prob;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let fail = (0..d).map(|s| cur[s * w..s * w + w - 1].iter().sum()).collect();
    let success = (0..d).map(|s| cur[s * w + w - 1]).sum();
    (fail, success)
}

/// `P[N_f > n | L = l]` for any channel order.
pub(crate) fn nf_tail(spec: &ChannelSpec, l: u64, need: u64, n: u64) -> f64 {
    let mut v = spec.stationary_distribution().to_vec();
    for _ in 0..n {
        v = attempt(spec, &v, l, need).0;
    }
    v.iter().sum()
}

/// `P[N_m > n | L = l]` by tracking the channel state and the set of
/// received positions. The received set only grows, so the decoder is
/// still running after `n` transmissions iff fewer than `need` positions
/// are in it.
pub(crate) fn nm_tail_mask(spec: &ChannelSpec, l: u64, need: u64, n: u64, r: u32) -> f64 {
    use crate::protocols::trunk_start;
    let d = spec.num_states();
    let masks = 1usize << l;
    let mut cur = vec![0.0; d * masks];
    for (s, p) in spec.stationary_distribution().iter().enumerate() {
        cur[s * masks] = *p;
    }
    let mut next = vec![0.0; d * masks];
    for h in 0..n {
        let j = (h % r as u64) as u32;
        for pos in trunk_start(l, r, j)..trunk_start(l, r, j + 1) {
            let bit = 1usize << pos;
            next.iter_mut().for_each(|x| *x = 0.0);
            for s in 0..d {
                for m in 0..masks {
                    let mass = cur[s * masks + m];
                    if mass == 0.0 {
                        continue;
                    }
                    for st in spec.steps(s) {
                        let m2 = if st.bit { m | bit } else { m };
                        next[st.next * masks + m2] += mass * st.prob;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    let mut total = 0.0;
    for s in 0..d {
        for m in 0..masks {
            if (m.count_ones() as u64) < need {
                total += cur[s * masks + m];
            }
        }
    }
    total
}

/// Transmissions of trunk `j` among the first `n` round-robin sends.
pub(crate) fn sends_of(n: u64, r: u32, j: u32) -> u64 {
    if n > j as u64 {
        (n - j as u64 - 1) / r as u64 + 1
    } else {
        0
    }
}

/// `P[N_m > n | L = l]` on a memoryless channel: trunks fill independently,
/// trunk `j` holding a binomial count of its positions.
pub(crate) fn nm_tail_iid(gamma: f64, l: u64, need: u64, n: u64, r: u32) -> f64 {
    use crate::protocols::trunk_len;
    let per_bit = |sends: u64| -(sends as f64 * (-gamma).ln_1p()).exp_m1();
    if r == 1 {
        return binomial::cdf(l, need - 1, per_bit(n));
    }
    let cap = need as usize;
    let mut dist = vec![0.0; cap];
    dist[0] = 1.0;
    for j in 0..r {
        let size = trunk_len(l, r, j);
        let pmf = binomial::pmf_vec(size, per_bit(sends_of(n, r, j)));
        let mut out = vec![0.0; cap];
        for (a, pa) in dist.iter().enumerate() {
            if *pa == 0.0 {
                continue;
            }
            for (b, pb) in pmf.iter().enumerate() {
                if a + b >= cap {
                    break;
                }
                out[a + b] += pa * pb;
            }
        }
        dist = out;
    }
    dist.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn attempt_matches_binomial() {
        let spec = ChannelSpec::iid(0.3).unwrap();
        let (fail, success) = attempt(&spec, &[1.0], 25, 9);
        assert_relative_eq!(fail[0], binomial::cdf(25, 8, 0.3), max_relative = 1e-13);
        assert_relative_eq!(success, binomial::sf(25, 8, 0.3), max_relative = 1e-13);
    }

    #[test]
    fn mask_dp_matches_binomial_iid() {
        let spec = ChannelSpec::iid(0.4).unwrap();
        for n in 0..5 {
            for r in 1..4 {
                let a = nm_tail_mask(&spec, 7, 4, n, r);
                let b = nm_tail_iid(0.4, 7, 4, n, r);
                assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn send_counts() {
        assert_eq!((0..3).map(|j| sends_of(7, 3, j)).collect::<Vec<_>>(), vec![3, 2, 2]);
        assert_eq!(sends_of(0, 2, 0), 0);
        assert_eq!(sends_of(1, 2, 1), 0);
    }
}

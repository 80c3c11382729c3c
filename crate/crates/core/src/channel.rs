//! Order-k Markov-modulated binary erasure channels.
//!
//! A channel of order `k ≥ 1` is a Markov chain on the `2^k` windows of the
//! last `k` channel bits. State index `s` is the window read as a binary
//! integer with the most recent bit in the least significant position, so
//! bit `X_n` is `s & 1` of the state entered at slot `n`. A `1` bit is a
//! delivered slot and a `0` bit an erasure.
//!
//! Order 0 is the memoryless channel with delivery probability `gamma`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SquareMatrix};

/// Largest supported memory order.
pub const MAX_ORDER: u32 = 12;

const ROW_SUM_TOL: f64 = 1e-12;

/// One outgoing transition of the channel chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: usize,
    pub prob: f64,
    /// Channel bit emitted on entering `next`.
    pub bit: bool,
}

/// A validated channel. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChannel", into = "RawChannel")]
pub struct ChannelSpec {
    k: u32,
    gamma: f64,
    transition: Option<SquareMatrix>,
    stationary: Vec<f64>,
    steps: Vec<Vec<Step>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawChannel {
    k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transition: Option<Vec<Vec<f64>>>,
}

impl TryFrom<RawChannel> for ChannelSpec {
    type Error = Error;

    fn try_from(raw: RawChannel) -> Result<Self> {
        match (raw.k, raw.gamma, raw.transition) {
            (0, Some(g), None) => ChannelSpec::iid(g),
            (0, _, _) => Err(Error::InvalidChannel(
                "k = 0 needs `gamma` and no `transition`".into(),
            )),
            (k, None, Some(rows)) => ChannelSpec::markov(k, rows),
            (_, _, _) => Err(Error::InvalidChannel(
                "k >= 1 needs `transition` and no `gamma`".into(),
            )),
        }
    }
}

impl From<ChannelSpec> for RawChannel {
    fn from(spec: ChannelSpec) -> Self {
        match spec.transition {
            None => RawChannel {
                k: 0,
                gamma: Some(spec.gamma),
                transition: None,
            },
            Some(m) => RawChannel {
                k: spec.k,
                gamma: None,
                transition: Some(m.rows()),
            },
        }
    }
}

impl ChannelSpec {
    /// Memoryless channel delivering each bit with probability `gamma`.
    pub fn iid(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::param("gamma", format!("{gamma} is not in (0, 1)")));
        }
        Ok(Self {
            k: 0,
            gamma,
            transition: None,
            stationary: vec![1.0],
            steps: vec![vec![
                Step {
                    next: 0,
                    prob: 1.0 - gamma,
                    bit: false,
                },
                Step {
                    next: 0,
                    prob: gamma,
                    bit: true,
                },
            ]],
        })
    }

    /// Order-`k` channel from a full `2^k × 2^k` transition matrix.
    ///
    /// Any row-stochastic primitive matrix is accepted. For a chain that is
    /// a genuine window shift only the two successors `(s << 1 | x) mod 2^k`
    /// of each state carry mass; see [`ChannelSpec::shift`].
    pub fn markov(k: u32, rows: Vec<Vec<f64>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidChannel(
                "use ChannelSpec::iid for k = 0".into(),
            ));
        }
        if k > MAX_ORDER {
            return Err(Error::ResourceLimit(format!(
                "channel order {k} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let d = 1usize << k;
        if rows.len() != d {
            return Err(Error::InvalidChannel(format!(
                "order {k} needs {d} transition rows, got {}",
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidChannel(format!(
                    "transition row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidChannel(format!(
                    "transition[{i}][{j}] = {} is not a nonnegative number",
                    row[j]
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidChannel(format!(
                    "transition row {i} sums to {sum}, not 1"
                )));
            }
        }
        let m = SquareMatrix::from_rows(&rows)?;
        check_primitive(&m)?;
        let stationary = stationary_of(&m)?;
        let steps = (0..d)
            .map(|s| {
                m.row(s)
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| **p > 0.0)
                    .map(|(u, p)| Step {
                        next: u,
                        prob: *p,
                        bit: u & 1 == 1,
                    })
                    .collect()
            })
            .collect();
        let gamma = stationary
            .iter()
            .enumerate()
            .filter(|(s, _)| s & 1 == 1)
            .map(|(_, p)| p)
            .sum();
        Ok(Self {
            k,
            gamma,
            transition: Some(m),
            stationary,
            steps,
        })
    }

    /// Window-shift chain of order `k` where `p_one[s]` is the probability
    /// that the next bit is delivered given the current window `s`.
    pub fn shift(k: u32, p_one: &[f64]) -> Result<Self> {
        if k == 0 || k > MAX_ORDER {
            return Err(Error::param("k", format!("{k} is not in 1..={MAX_ORDER}")));
        }
        let d = 1usize << k;
        if p_one.len() != d {
            return Err(Error::param(
                "p_one",
                format!("expected {d} probabilities, got {}", p_one.len()),
            ));
        }
        let mut rows = vec![vec![0.0; d]; d];
        for (s, &p) in p_one.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param("p_one", format!("{p} is not a probability")));
            }
            let base = (s << 1) & (d - 1);
            rows[s][base] += 1.0 - p;
            rows[s][base | 1] += p;
        }
        Self::markov(k, rows)
    }

    pub fn order(&self) -> u32 {
        self.k
    }

    /// Number of chain states; 1 for the memoryless channel.
    pub fn num_states(&self) -> usize {
        self.steps.len()
    }

    pub fn transition(&self) -> Option<&SquareMatrix> {
        self.transition.as_ref()
    }

    /// Outgoing transitions of state `s` with nonzero probability.
    pub fn steps(&self, s: usize) -> &[Step] {
        &self.steps[s]
    }

    pub fn stationary_distribution(&self) -> &[f64] {
        &self.stationary
    }

    /// Long-run fraction of delivered slots.
    pub fn capacity(&self) -> f64 {
        self.gamma
    }

    /// Erasure indicator of state `s`: 1 when the newest bit of the window
    /// is erased.
    pub fn erasure_indicator(&self, s: usize) -> f64 {
        if self.k == 0 {
            1.0 - self.gamma
        } else {
            (1 - (s & 1)) as f64
        }
    }

    /// Draws `n` consecutive channel bits from a stationary start.
    pub fn sample_bits<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<bool> {
        let mut sampler = ChannelSampler::new(self, rng);
        (0..n).map(|_| sampler.next_bit(rng)).collect()
    }
}

/// Walks one continuing realisation of the channel.
#[derive(Debug, Clone)]
pub struct ChannelSampler<'a> {
    spec: &'a ChannelSpec,
    state: usize,
}

impl<'a> ChannelSampler<'a> {
    /// Starts at a hidden pre-history drawn from the stationary law, so the
    /// first emitted bit is already stationary.
    pub fn new<R: Rng + ?Sized>(spec: &'a ChannelSpec, rng: &mut R) -> Self {
        let state = pick(spec.stationary.iter().copied().enumerate(), rng);
        Self { spec, state }
    }

    pub fn state(&self) -> usize {
        self.state
    }

    #[inline]
    pub fn next_bit<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let steps = &self.spec.steps[self.state];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = steps[steps.len() - 1];
        for st in steps {
            acc += st.prob;
            if u < acc {
                chosen = *st;
                break;
            }
        }
        self.state = chosen.next;
        chosen.bit
    }
}

fn pick<R: Rng + ?Sized>(items: impl Iterator<Item = (usize, f64)>, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Irreducible and aperiodic, via strong connectivity and the gcd of
/// level differences along edges of a BFS tree.
fn check_primitive(m: &SquareMatrix) -> Result<()> {
    let d = m.dim();
    let succ: Vec<Vec<usize>> = (0..d)
        .map(|i| (0..d).filter(|&j| m.get(i, j) > 0.0).collect())
        .collect();
    let mut pred = vec![Vec::new(); d];
    for (i, row) in succ.iter().enumerate() {
        for &j in row {
            pred[j].push(i);
        }
    }
    let reach = |adj: &[Vec<usize>]| {
        let mut seen = vec![false; d];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|x| x)
    };
    if !reach(&succ) || !reach(&pred) {
        return Err(Error::InvalidChannel("transition matrix is reducible".into()));
    }
    let mut level = vec![usize::MAX; d];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for &w in &succ[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut period = 0usize;
    for (v, row) in succ.iter().enumerate() {
        for &w in row {
            let diff = (level[v] + 1).abs_diff(level[w]);
            period = gcd(period, diff);
        }
    }
    if period != 1 {
        return Err(Error::InvalidChannel(format!(
            "transition matrix is periodic with period {period}"
        )));
    }
    Ok(())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn stationary_of(m: &SquareMatrix) -> Result<Vec<f64>> {
    let d = m.dim();
    let pi = if d <= 512 {
        // (Πᵀ − I) π = 0 with the last equation replaced by Σπ = 1
        let mut a = SquareMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                a.set(i, j, m.get(j, i) - delta);
            }
        }
        for j in 0..d {
            a.set(d - 1, j, 1.0);
        }
        let mut b = vec![0.0; d];
        b[d - 1] = 1.0;
        linalg::solve(a, b)?
    } else {
        stationary_by_iteration(m)?
    };
    let mut pi: Vec<f64> = pi.into_iter().map(|p| p.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

fn stationary_by_iteration(m: &SquareMatrix) -> Result<Vec<f64>> {
    let d = m.dim();
    let mut pi = vec![1.0 / d as f64; d];
    let mut next = vec![0.0; d];
    for _ in 0..1_000_000 {
        next.iter_mut().for_each(|x| *x = 0.0);
        for (i, p) in pi.iter().enumerate() {
            for (j, q) in m.row(i).iter().enumerate() {
                next[j] += p * q;
            }
        }
        let delta = pi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut pi, &mut next);
        if delta < 1e-15 {
            return Ok(pi);
        }
    }
    Err(Error::Numeric(
        "stationary distribution did not converge".into(),
    ))
}

/// `max_j |(πᵀΠ − πᵀ)_j|`.
pub fn stationary_residual(spec: &ChannelSpec) -> f64 {
    let Some(m) = spec.transition() else {
        return 0.0;
    };
    let pi = spec.stationary_distribution();
    (0..m.dim())
        .map(|j| {
            let v: f64 = (0..m.dim()).map(|i| pi[i] * m.get(i, j)).sum();
            (v - pi[j]).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> ChannelSpec {
        ChannelSpec::markov(1, vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap()
    }

    #[test]
    fn iid_basics() {
        let c = ChannelSpec::iid(0.25).unwrap();
        assert_eq!(c.order(), 0);
        assert_eq!(c.capacity(), 0.25);
        assert_eq!(c.stationary_distribution(), &[1.0]);
        assert_eq!(ChannelSpec::iid(0.5).unwrap().capacity(), 0.5);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(ChannelSpec::iid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn two_state_stationary() {
        let c = two_state();
        let pi = c.stationary_distribution();
        assert_relative_eq!(pi[0], 0.8, max_relative = 1e-14);
        assert_relative_eq!(pi[1], 0.2, max_relative = 1e-13);
        assert_relative_eq!(c.capacity(), 0.2, max_relative = 1e-13);
        assert!(stationary_residual(&c) <= 1e-10);
    }

    #[test]
    fn doubly_stochastic_is_uniform() {
        let rows = vec![
            vec![0.1, 0.2, 0.3, 0.4],
            vec![0.4, 0.1, 0.2, 0.3],
            vec![0.3, 0.4, 0.1, 0.2],
            vec![0.2, 0.3, 0.4, 0.1],
        ];
        let c = ChannelSpec::markov(2, rows).unwrap();
        for p in c.stationary_distribution() {
            assert_relative_eq!(*p, 0.25, max_relative = 1e-13);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        let err = |rows: Vec<Vec<f64>>| ChannelSpec::markov(1, rows).unwrap_err();
        assert!(matches!(
            err(vec![vec![0.9, 0.2], vec![0.4, 0.6]]),
            Error::InvalidChannel(_)
        ));
        assert!(matches!(
            err(vec![vec![1.1, -0.1], vec![0.4, 0.6]]),
            Error::InvalidChannel(_)
        ));
        // reducible
        assert!(matches!(
            err(vec![vec![1.0, 0.0], vec![0.4, 0.6]]),
            Error::InvalidChannel(_)
        ));
        // periodic
        assert!(matches!(
            err(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            Error::InvalidChannel(_)
        ));
        assert!(ChannelSpec::markov(1, vec![vec![1.0, 0.0]]).is_err());
        assert!(matches!(
            ChannelSpec::markov(13, vec![]).unwrap_err(),
            Error::ResourceLimit(_)
        ));
    }

    #[test]
    fn shift_chain_layout() {
        // Gilbert-style order-2 chain
        let c = ChannelSpec::shift(2, &[0.1, 0.5, 0.3, 0.9]).unwrap();
        let m = c.transition().unwrap();
        assert_eq!(m.get(1, 2), 0.5);
        assert_eq!(m.get(1, 3), 0.5);
        assert_eq!(m.get(3, 3), 0.9);
        assert_relative_eq!(m.get(3, 2), 0.1, max_relative = 1e-15);
        assert_eq!(m.get(1, 0), 0.0);
        assert!(stationary_residual(&c) <= 1e-10);
    }

    #[test]
    fn serde_round_trip() {
        let c = two_state();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(json, r#"{"k":1,"transition":[[0.9,0.1],[0.4,0.6]]}"#);
        let back: ChannelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let iid: ChannelSpec = serde_json::from_str(r#"{"k":0,"gamma":0.2}"#).unwrap();
        assert_eq!(iid.capacity(), 0.2);
        assert!(serde_json::from_str::<ChannelSpec>(r#"{"k":0,"gamma":1.5}"#).is_err());
        assert!(serde_json::from_str::<ChannelSpec>(r#"{"k":1,"gamma":0.5}"#).is_err());
    }

    #[test]
    fn near_perfect_channel_delivers() {
        let c = ChannelSpec::iid(1.0 - 1e-12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(c.sample_bits(10_000, &mut rng).into_iter().all(|b| b));
    }

    #[test]
    fn iid_sample_mean() {
        let c = ChannelSpec::iid(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let ones = c.sample_bits(n, &mut rng).into_iter().filter(|b| *b).count();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.002);
    }

    #[test]
    fn markov_sample_mean() {
        let c = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let ones = c.sample_bits(n, &mut rng).into_iter().filter(|b| *b).count();
        let mean = ones as f64 / n as f64;
        let bound = 5.0 * (c.capacity() / n as f64).sqrt() * 10.0;
        assert!((mean - c.capacity()).abs() <= bound, "{mean}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let c = two_state();
        let a = c.sample_bits(1000, &mut ChaCha8Rng::seed_from_u64(3));
        let b = c.sample_bits(1000, &mut ChaCha8Rng::seed_from_u64(3));
        let other = c.sample_bits(1000, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    fn random_chain() -> impl Strategy<Value = (u32, Vec<Vec<f64>>)> {
        (1u32..=3).prop_flat_map(|k| {
            let d = 1usize << k;
            proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, d), d)
                .prop_map(move |rows| {
                    let rows = rows
                        .into_iter()
                        .map(|r| {
                            let s: f64 = r.iter().sum();
                            r.into_iter().map(|x| x / s).collect()
                        })
                        .collect();
                    (k, rows)
                })
        })
    }

    proptest! {
        #[test]
        fn stationary_is_invariant((k, rows) in random_chain()) {
            let c = ChannelSpec::markov(k, rows).unwrap();
            prop_assert!(stationary_residual(&c) <= 1e-10);
            let total: f64 = c.stationary_distribution().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(c.capacity() > 0.0 && c.capacity() < 1.0);
        }

        #[test]
        fn shift_chains_validate(p in proptest::collection::vec(0.05f64..0.95, 8)) {
            let c = ChannelSpec::shift(3, &p).unwrap();
            prop_assert!(stationary_residual(&c) <= 1e-10);
        }
    }
}

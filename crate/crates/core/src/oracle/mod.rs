//! Exact conditional tail probabilities of the attempt counts for small
//! instances, and exact delay laws for memoryless channels.

pub mod binomial;
mod dp;
pub mod enumerate;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::protocols::{decode_threshold, trunk_start, CodewordDist, DecoderMode};

pub use enumerate::{enumerate_tail, Weight};

/// Largest dynamic-programming table the oracle will build.
pub const STATE_BUDGET: u64 = 10_000_000;

fn check_inputs(l: u64, beta: f64) -> Result<()> {
    if l == 0 {
        return Err(Error::param("l", "codeword length must be at least 1"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param("beta", format!("{beta} is not in (0, 1)")));
    }
    Ok(())
}

fn over_budget(what: &str, size: u128) -> Error {
    Error::ResourceLimit(format!(
        "{what} needs {size} states, above the budget of {STATE_BUDGET}"
    ))
}

/// `P[N_f > n | L = l]`.
pub fn exact_nf_tail(spec: &ChannelSpec, l: u64, beta: f64, n: u64) -> Result<f64> {
    check_inputs(l, beta)?;
    if n == 0 {
        return Ok(1.0);
    }
    let need = decode_threshold(beta, l);
    if spec.order() == 0 {
        return Ok((n as f64 * ln_attempt_failure(spec.capacity(), l, need)).exp());
    }
    let size = spec.num_states() as u128 * l as u128 * n as u128;
    if size > STATE_BUDGET as u128 {
        return Err(over_budget("no-memory DP", size));
    }
    Ok(dp::nf_tail(spec, l, need, n))
}

/// `log P[Bin(l, γ) < need]` without losing a tiny success probability.
fn ln_attempt_failure(gamma: f64, l: u64, need: u64) -> f64 {
    let s = binomial::sf(l, need - 1, gamma);
    if s < 0.5 {
        (-s).ln_1p()
    } else {
        binomial::ln_cdf(l, need - 1, gamma)
    }
}

/// `P[N_f = 1 | L = l]`, the success probability of a single attempt from
/// the stationary channel state.
pub fn single_attempt_success(spec: &ChannelSpec, l: u64, beta: f64) -> Result<f64> {
    check_inputs(l, beta)?;
    let need = decode_threshold(beta, l);
    if spec.order() == 0 {
        return Ok(binomial::sf(l, need - 1, spec.capacity()));
    }
    let size = spec.num_states() as u128 * l as u128;
    if size > STATE_BUDGET as u128 {
        return Err(over_budget("single-attempt DP", size));
    }
    Ok(dp::attempt(spec, spec.stationary_distribution(), l, need).1)
}

/// `P[N_m > n | L = l]` with `r` trunks.
pub fn exact_nm_tail(spec: &ChannelSpec, l: u64, beta: f64, n: u64, r: u32) -> Result<f64> {
    check_inputs(l, beta)?;
    if r == 0 {
        return Err(Error::param("r", "trunk count must be at least 1"));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let need = decode_threshold(beta, l);
    if spec.order() == 0 {
        if r > 1 && (r as u128) * (need as u128) * (l as u128) > 100 * STATE_BUDGET as u128 {
            return Err(over_budget("trunk convolution", r as u128 * need as u128));
        }
        return Ok(dp::nm_tail_iid(spec.capacity(), l, need, n, r));
    }
    let size = if l >= 64 {
        u128::MAX
    } else {
        spec.num_states() as u128 * (1u128 << l)
    };
    if size > STATE_BUDGET as u128 {
        return Err(over_budget("received-set DP", size));
    }
    Ok(dp::nm_tail_mask(spec, l, need, n, r))
}

/// `P[N > n | L = l]` for either decoder.
pub fn exact_tail(
    spec: &ChannelSpec,
    l: u64,
    beta: f64,
    n: u64,
    mode: DecoderMode,
    r: u32,
) -> Result<f64> {
    match mode {
        DecoderMode::NoMemory => exact_nf_tail(spec, l, beta, n),
        DecoderMode::Memory => exact_nm_tail(spec, l, beta, n, r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdPoint {
    pub l: u64,
    pub prob: f64,
    /// `−log P / l`.
    pub rate: f64,
}

/// Finite-length decay rates `−log P[N > n | L = l] / l` over `l_grid`.
pub fn ld_rate_check(
    spec: &ChannelSpec,
    beta: f64,
    n: u64,
    mode: DecoderMode,
    r: u32,
    l_grid: &[u64],
) -> Result<Vec<LdPoint>> {
    l_grid
        .iter()
        .map(|&l| {
            let ln_p = match (mode, spec.order(), r) {
                (DecoderMode::NoMemory, 0, _) if n > 0 => {
                    n as f64 * ln_attempt_failure(spec.capacity(), l, decode_threshold(beta, l))
                }
                (DecoderMode::Memory, 0, 1) if n > 0 => {
                    check_inputs(l, beta)?;
                    let p = -(n as f64 * (-spec.capacity()).ln_1p()).exp_m1();
                    binomial::ln_cdf(l, decode_threshold(beta, l) - 1, p)
                }
                _ => exact_tail(spec, l, beta, n, mode, r)?.ln(),
            };
            Ok(LdPoint {
                l,
                prob: ln_p.exp(),
                rate: -ln_p / l as f64,
            })
        })
        .collect()
}

/// Transmissions completed within `t` slots: the largest `n` whose trunk
/// bits fit in `t`.
pub fn rounds_within(l: u64, r: u32, t: u64) -> u64 {
    let full = t / l;
    let rem = t - full * l;
    let j = (0..r).rev().find(|&j| trunk_start(l, r, j) <= rem).unwrap_or(0);
    full * r as u64 + j as u64
}

/// Exact law of a transfer on a memoryless channel, mixing the conditional
/// tails over the codeword-length law.
#[derive(Debug, Clone)]
pub struct IidMixture {
    pub gamma: f64,
    pub dist: CodewordDist,
    pub beta: f64,
    pub mode: DecoderMode,
    pub r: u32,
}

impl IidMixture {
    pub fn new(
        spec: &ChannelSpec,
        dist: CodewordDist,
        beta: f64,
        mode: DecoderMode,
        r: u32,
    ) -> Result<Self> {
        if spec.order() != 0 {
            return Err(Error::param("spec", "mixture laws need a memoryless channel"));
        }
        let r = if mode == DecoderMode::NoMemory { 1 } else { r };
        Ok(Self {
            gamma: spec.capacity(),
            dist,
            beta,
            mode,
            r,
        })
    }

    fn ln_tail(&self, l: u64, n: u64) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let need = decode_threshold(self.beta, l);
        Ok(match (self.mode, self.r) {
            (DecoderMode::NoMemory, _) => n as f64 * ln_attempt_failure(self.gamma, l, need),
            (DecoderMode::Memory, 1) => {
                let p = -(n as f64 * (-self.gamma).ln_1p()).exp_m1();
                binomial::ln_cdf(l, need - 1, p)
            }
            _ => dp::nm_tail_iid(self.gamma, l, need, n, self.r).ln(),
        })
    }

    /// `Σ_l P[L = l] · g(l, i)` for each query `i`, summing lengths until
    /// the unvisited length mass is negligible against every partial sum.
    fn mix<F>(&self, queries: usize, mut g: F) -> Result<Vec<f64>>
    where
        F: FnMut(u64, usize) -> Result<f64>,
    {
        let mut acc = vec![0.0; queries];
        let mut l = self.dist.min_length();
        loop {
            let p = self.dist.pmf(l);
            if p > 0.0 {
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += p * g(l, i)?;
                }
            }
            let rest = self.dist.sf(l);
            let floor = acc.iter().copied().fold(f64::INFINITY, f64::min);
            if rest <= 0.0 || rest < 1e-14 * floor || rest < 1e-300 {
                break;
            }
            l += 1;
        }
        Ok(acc)
    }

    /// `P[N > n]` for each `n` in `ns`.
    pub fn attempts_ccdf(&self, ns: &[u64]) -> Result<Vec<f64>> {
        self.mix(ns.len(), |l, i| Ok(self.ln_tail(l, ns[i])?.exp()))
    }

    /// `P[T > t]` for each `t` in `ts`.
    pub fn delay_ccdf(&self, ts: &[u64]) -> Result<Vec<f64>> {
        self.mix(ts.len(), |l, i| {
            let n = match self.mode {
                DecoderMode::NoMemory => ts[i] / l,
                DecoderMode::Memory => rounds_within(l, self.r, ts[i]),
            };
            Ok(self.ln_tail(l, n)?.exp())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    fn gilbert() -> ChannelSpec {
        ChannelSpec::markov(1, vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap()
    }

    #[test]
    fn documented_values() {
        let half = ChannelSpec::iid(0.5).unwrap();
        assert_relative_eq!(exact_nf_tail(&half, 4, 0.5, 1).unwrap(), 0.6875, max_relative = 1e-14);
        assert_relative_eq!(exact_nf_tail(&half, 2, 0.6, 1).unwrap(), 0.75, max_relative = 1e-14);
        assert_eq!(exact_nf_tail(&half, 4, 0.5, 0).unwrap(), 1.0);
        assert_relative_eq!(
            exact_nm_tail(&half, 4, 0.5, 2, 1).unwrap(),
            67.0 / 256.0,
            max_relative = 1e-14
        );
        assert_eq!(exact_nm_tail(&half, 4, 0.5, 1, 2).unwrap(), 1.0);
        let sure = ChannelSpec::iid(1.0 - 1e-16).unwrap();
        assert!(exact_nm_tail(&sure, 10, 0.5, 1, 1).unwrap() < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let g = gilbert();
        assert!(matches!(
            exact_nm_tail(&g, 30, 0.5, 2, 1),
            Err(Error::ResourceLimit(_))
        ));
        assert!(matches!(
            exact_nf_tail(&g, 1_000_000, 0.5, 10),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn dp_matches_rational_enumeration() {
        let specs = [ChannelSpec::iid(0.3).unwrap(), gilbert()];
        for spec in &specs {
            for l in 1..=8u64 {
                for n in 1..=(16 / l).min(4) {
                    for beta in [0.3, 0.5, 0.75] {
                        for (mode, r) in [
                            (DecoderMode::NoMemory, 1),
                            (DecoderMode::Memory, 1),
                            (DecoderMode::Memory, 2),
                        ] {
                            let exact: BigRational =
                                enumerate_tail(spec, l, beta, n, mode, r).unwrap();
                            let exact = exact.to_f64().unwrap();
                            let fast = exact_tail(spec, l, beta, n, mode, r).unwrap();
                            assert!(
                                (exact - fast).abs() <= 1e-12,
                                "{spec:?} l={l} n={n} beta={beta} {mode:?} r={r}: {exact} vs {fast}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn ld_rates_approach_lambda_n() {
        let spec = ChannelSpec::iid(0.25).unwrap();
        let target = crate::ratefn::lambda_n(0.5, &spec, 3).unwrap();
        let grid = [100, 400, 1600, 3200, 6400];
        let pts = ld_rate_check(&spec, 0.5, 3, DecoderMode::Memory, 1, &grid).unwrap();
        assert!(pts.windows(2).all(|w| w[1].rate < w[0].rate && w[1].rate > target));
        // the sqrt(l) prefactor keeps l = 400 about 40% high
        assert!((pts[1].rate / target - 1.0) > 0.3);
        assert!((pts[3].rate / target - 1.0).abs() < 0.1);
        let diff = -(pts[4].prob.ln() - pts[3].prob.ln()) / 3200.0;
        assert!((diff / target - 1.0).abs() < 0.02, "{diff} vs {target}");
        // n below α: the tail tends to a constant
        let pts = ld_rate_check(&spec, 0.5, 1, DecoderMode::Memory, 1, &[100, 400, 1600]).unwrap();
        assert!(pts[2].rate < pts[0].rate && pts[2].rate < 1e-3);
        // no-memory below capacity: single attempt rate tends to Λ_1
        let spec = ChannelSpec::iid(0.25).unwrap();
        let target = crate::ratefn::lambda_n(0.2, &spec, 1).unwrap();
        let pts = ld_rate_check(&spec, 0.2, 1, DecoderMode::NoMemory, 1, &[16_000]).unwrap();
        assert!((pts[0].rate / target - 1.0).abs() < 0.1, "{} vs {target}", pts[0].rate);
    }

    #[test]
    fn rounds_within_counts_whole_trunks() {
        // l = 10, r = 3: trunk sizes 4, 3, 3
        assert_eq!(rounds_within(10, 3, 0), 0);
        assert_eq!(rounds_within(10, 3, 3), 0);
        assert_eq!(rounds_within(10, 3, 4), 1);
        assert_eq!(rounds_within(10, 3, 10), 3);
        assert_eq!(rounds_within(10, 3, 14), 4);
        assert_eq!(rounds_within(10, 1, 25), 2);
        // l = 1, r = 3: empty trunks come for free
        assert_eq!(rounds_within(1, 3, 1), 3);
    }

    #[test]
    fn mixture_matches_direct_sum() {
        let spec = ChannelSpec::iid(0.3).unwrap();
        let dist = CodewordDist::new(0.2, 1, Some(40)).unwrap();
        for (mode, r) in [(DecoderMode::NoMemory, 1), (DecoderMode::Memory, 1), (DecoderMode::Memory, 3)] {
            let mix = IidMixture::new(&spec, dist.clone(), 0.5, mode, r).unwrap();
            let ts = [5u64, 20, 60];
            let got = mix.delay_ccdf(&ts).unwrap();
            for (t, g) in ts.iter().zip(got) {
                let mut want = 0.0;
                for l in 1..40 {
                    let n = match mode {
                        DecoderMode::NoMemory => t / l,
                        DecoderMode::Memory => rounds_within(l, r, *t),
                    };
                    want += dist.pmf(l) * exact_tail(&spec, l, 0.5, n, mode, r).unwrap();
                }
                assert_relative_eq!(g, want, max_relative = 1e-10);
            }
        }
    }

    proptest! {
        #[test]
        fn tails_are_monotone(l in 1u64..12, n in 0u64..5, b1 in 0.05f64..0.95, b2 in 0.05f64..0.95) {
            let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
            for spec in [ChannelSpec::iid(0.4).unwrap(), gilbert()] {
                for (mode, r) in [(DecoderMode::NoMemory, 1), (DecoderMode::Memory, 2)] {
                    let a = exact_tail(&spec, l, lo, n, mode, r).unwrap();
                    let b = exact_tail(&spec, l, hi, n, mode, r).unwrap();
                    let c = exact_tail(&spec, l, lo, n + 1, mode, r).unwrap();
                    prop_assert!(a <= b + 1e-12);
                    prop_assert!(c <= a + 1e-12);
                }
            }
        }
    }
}

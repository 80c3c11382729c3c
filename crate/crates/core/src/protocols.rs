//! Simulation of the memory and no-memory retransmission protocols.
//!
//! A transfer draws one codeword length `L` and then retransmits over one
//! continuing channel realisation until more than `βL` distinct positions
//! are known to the receiver. The no-memory decoder discards everything
//! after a failed attempt. The memory decoder keeps every delivered
//! position and sends the codeword as `r` trunks in round-robin order.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSampler, ChannelSpec};
use crate::error::{Error, Result};
use crate::oracle::binomial;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 10_000_000;

/// Received positions needed to decode a length-`l` codeword at rate
/// `beta`: strictly more than `βl`.
pub fn decode_threshold(beta: f64, l: u64) -> u64 {
    let x = beta * l as f64;
    let r = x.round();
    // β·l that is an integer up to rounding error counts as that integer
    let floor = if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r
    } else {
        x.floor()
    };
    floor as u64 + 1
}

/// Start offset of trunk `j` when `l` positions are split into `r` trunks.
pub fn trunk_start(l: u64, r: u32, j: u32) -> u64 {
    (j as u64 * l).div_ceil(r as u64)
}

pub fn trunk_len(l: u64, r: u32, j: u32) -> u64 {
    trunk_start(l, r, j + 1) - trunk_start(l, r, j)
}

/// Codeword-length law: geometric with log-tail slope `−λ`, shifted to
/// start at `min_length`, optionally conditioned on `L < bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDist", into = "RawDist")]
pub struct CodewordDist {
    lambda: f64,
    geometric_p: f64,
    bound: Option<u64>,
    min_length: u64,
    z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDist {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bound: Option<u64>,
    #[serde(default = "one")]
    min_length: u64,
    #[serde(default = "one_f")]
    z: f64,
}

fn one() -> u64 {
    1
}

fn one_f() -> f64 {
    1.0
}

impl TryFrom<RawDist> for CodewordDist {
    type Error = Error;

    fn try_from(raw: RawDist) -> Result<Self> {
        let d = match (raw.lambda, raw.mean) {
            (Some(l), None) => CodewordDist::new(l, raw.min_length, raw.bound)?,
            (None, Some(m)) => CodewordDist::from_mean(m, raw.min_length, raw.bound)?,
            _ => {
                return Err(Error::config(
                    "codeword",
                    "give exactly one of `lambda` and `mean`",
                ))
            }
        };
        d.with_z(raw.z)
    }
}

impl From<CodewordDist> for RawDist {
    fn from(d: CodewordDist) -> Self {
        RawDist {
            lambda: Some(d.lambda),
            mean: None,
            bound: d.bound,
            min_length: d.min_length,
            z: d.z,
        }
    }
}

impl CodewordDist {
    pub fn new(lambda: f64, min_length: u64, bound: Option<u64>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", format!("{lambda} is not positive")));
        }
        if min_length == 0 {
            return Err(Error::param("min_length", "must be at least 1"));
        }
        if let Some(b) = bound {
            if b <= min_length {
                return Err(Error::config(
                    "codeword.bound",
                    format!("bound {b} leaves no length >= min_length {min_length} below it"),
                ));
            }
        }
        Ok(Self {
            lambda,
            geometric_p: -(-lambda).exp_m1(),
            bound,
            min_length,
            z: 1.0,
        })
    }

    /// Law whose unbounded mean is `mean`.
    pub fn from_mean(mean: f64, min_length: u64, bound: Option<u64>) -> Result<Self> {
        // negated so NaN is rejected too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(mean > min_length as f64) {
            return Err(Error::param(
                "mean",
                format!("{mean} must exceed min_length {min_length}"),
            ));
        }
        let p = 1.0 / (mean - min_length as f64 + 1.0);
        Self::new(-(-p).ln_1p(), min_length, bound)
    }

    pub fn with_z(mut self, z: f64) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::param("z", format!("{z} is not positive")));
        }
        self.z = z;
        Ok(self)
    }

    pub fn with_bound(&self, bound: Option<u64>) -> Result<Self> {
        Self::new(self.lambda, self.min_length, bound)?.with_z(self.z)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn geometric_p(&self) -> f64 {
        self.geometric_p
    }

    pub fn bound(&self) -> Option<u64> {
        self.bound
    }

    pub fn min_length(&self) -> u64 {
        self.min_length
    }

    /// Tail-window constant; carried for documentation only.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Mean of the unbounded law.
    pub fn unbounded_mean(&self) -> f64 {
        self.min_length as f64 - 1.0 + 1.0 / self.geometric_p
    }

    /// `log P[L > l]` of the unbounded law.
    fn ln_sf_unbounded(&self, l: u64) -> f64 {
        if l < self.min_length {
            0.0
        } else {
            -self.lambda * (l - self.min_length + 1) as f64
        }
    }

    /// `P[L = l]`.
    pub fn pmf(&self, l: u64) -> f64 {
        if l < self.min_length || self.bound.is_some_and(|b| l >= b) {
            return 0.0;
        }
        let ln = (l - self.min_length) as f64 * -self.lambda + self.geometric_p.ln();
        ln.exp() / self.support_mass()
    }

    /// `P[L > l]`.
    pub fn sf(&self, l: u64) -> f64 {
        match self.bound {
            None => self.ln_sf_unbounded(l).exp(),
            Some(b) => {
                if l + 1 >= b {
                    return 0.0;
                }
                let upper = self.ln_sf_unbounded(b - 1).exp();
                (self.ln_sf_unbounded(l).exp() - upper) / self.support_mass()
            }
        }
    }

    fn support_mass(&self) -> f64 {
        match self.bound {
            None => 1.0,
            Some(b) => -self.ln_sf_unbounded(b - 1).exp_m1(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let geo = Geometric::new(self.geometric_p).expect("validated parameter");
        loop {
            let l = self.min_length.saturating_add(geo.sample(rng));
            match self.bound {
                Some(b) if l >= b => continue,
                _ => return l,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderMode {
    Memory,
    NoMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Aggregated for memoryless channels, bit-level otherwise.
    #[default]
    Auto,
    /// Draws every channel bit.
    BitLevel,
    /// Draws per-attempt binomial counts; memoryless channels only.
    Aggregated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub beta: f64,
    pub r: u32,
    pub mode: DecoderMode,
    pub max_attempts: u64,
    pub spec: ChannelSpec,
    pub dist: CodewordDist,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::config(
                "protocol.beta",
                format!("{} is not in (0, 1)", self.beta),
            ));
        }
        if self.r == 0 {
            return Err(Error::config("protocol.r", "must be at least 1"));
        }
        if self.mode == DecoderMode::NoMemory && self.r != 1 {
            return Err(Error::config(
                "protocol.r",
                "the no-memory decoder sends whole codewords, so r must be 1",
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::config("protocol.max_attempts", "must be at least 1"));
        }
        Ok(())
    }

    fn resolve(&self, engine: Engine) -> Result<Engine> {
        match engine {
            Engine::Auto if self.spec.order() == 0 => Ok(Engine::Aggregated),
            Engine::Auto => Ok(Engine::BitLevel),
            Engine::Aggregated if self.spec.order() != 0 => Err(Error::config(
                "run.engine",
                "the aggregated engine needs a memoryless channel",
            )),
            e => Ok(e),
        }
    }
}

/// One simulated transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub length: u64,
    pub attempts: u64,
    pub delay: u64,
    pub censored: bool,
}

/// No-memory decoder driven by an arbitrary bit source.
pub fn memoryless_over<B: FnMut() -> bool>(
    mut next_bit: B,
    l: u64,
    beta: f64,
    max_attempts: u64,
) -> TrialRecord {
    let need = decode_threshold(beta, l);
    let mut n = 0;
    while n < max_attempts {
        n += 1;
        let mut ones = 0;
        for _ in 0..l {
            ones += next_bit() as u64;
        }
        if ones >= need {
            return record(l, n, n * l, false);
        }
    }
    record(l, n, n * l, true)
}

/// Memory decoder with `r` trunks driven by an arbitrary bit source.
pub fn memory_over<B: FnMut() -> bool>(
    mut next_bit: B,
    l: u64,
    beta: f64,
    r: u32,
    max_attempts: u64,
) -> TrialRecord {
    let need = decode_threshold(beta, l);
    let mut received = vec![false; l as usize];
    let mut count = 0;
    let mut sent = 0;
    let mut n = 0;
    while n < max_attempts {
        let j = (n % r as u64) as u32;
        n += 1;
        let (lo, hi) = (trunk_start(l, r, j), trunk_start(l, r, j + 1));
        for pos in lo..hi {
            if next_bit() && !received[pos as usize] {
                received[pos as usize] = true;
                count += 1;
            }
        }
        sent += hi - lo;
        if count >= need {
            return record(l, n, sent, false);
        }
    }
    record(l, n, sent, true)
}

/// No-memory transfer of a codeword of length `l`, bit by bit.
pub fn run_memoryless_bits<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    l: u64,
    beta: f64,
    rng: &mut R,
    max_attempts: u64,
) -> TrialRecord {
    let mut channel = ChannelSampler::new(spec, rng);
    memoryless_over(|| channel.next_bit(rng), l, beta, max_attempts)
}

/// Memory-decoder transfer of a codeword of length `l` in `r` trunks, bit
/// by bit.
pub fn run_memory_bits<R: Rng + ?Sized>(
    spec: &ChannelSpec,
    l: u64,
    beta: f64,
    r: u32,
    rng: &mut R,
    max_attempts: u64,
) -> TrialRecord {
    let mut channel = ChannelSampler::new(spec, rng);
    memory_over(|| channel.next_bit(rng), l, beta, r, max_attempts)
}

/// No-memory transfer over a memoryless channel. Attempts are iid, so the
/// attempt count is geometric in the single-attempt success probability.
pub fn run_memoryless_aggregated<R: Rng + ?Sized>(
    gamma: f64,
    l: u64,
    beta: f64,
    rng: &mut R,
    max_attempts: u64,
) -> TrialRecord {
    let need = decode_threshold(beta, l);
    let success = binomial::sf(l, need - 1, gamma);
    // inversion: P[N > k] = (1 - s)^k, stable for s down to subnormals
    let n = if success >= 1.0 {
        1.0
    } else {
        let u = 1.0 - rng.random::<f64>();
        (u.ln() / (-success).ln_1p()).ceil().max(1.0)
    };
    // NaN when s = 0 and u = 1: censored as well
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(n <= max_attempts as f64) {
        record(l, max_attempts, max_attempts * l, true)
    } else {
        let n = n as u64;
        record(l, n, n * l, false)
    }
}

/// Memory-decoder transfer over a memoryless channel: each transmission
/// delivers a binomial number of the trunk's still-missing positions.
pub fn run_memory_aggregated<R: Rng + ?Sized>(
    gamma: f64,
    l: u64,
    beta: f64,
    r: u32,
    rng: &mut R,
    max_attempts: u64,
) -> TrialRecord {
    let need = decode_threshold(beta, l);
    let mut missing: Vec<u64> = (0..r).map(|j| trunk_len(l, r, j)).collect();
    let mut count = 0;
    let mut sent = 0;
    let mut n = 0;
    while n < max_attempts {
        let j = (n % r as u64) as usize;
        n += 1;
        if missing[j] > 0 {
            let got = Binomial::new(missing[j], gamma)
                .expect("validated parameter")
                .sample(rng);
            missing[j] -= got;
            count += got;
        }
        sent += trunk_len(l, r, j as u32);
        if count >= need {
            return record(l, n, sent, false);
        }
    }
    record(l, n, sent, true)
}

fn record(length: u64, attempts: u64, delay: u64, censored: bool) -> TrialRecord {
    TrialRecord {
        trial: 0,
        length,
        attempts,
        delay,
        censored,
    }
}

/// Random stream of trial `index` under `master_seed`.
pub fn trial_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// One transfer; `length` fixes `L` instead of drawing it.
pub fn simulate_trial<R: Rng + ?Sized>(
    config: &ProtocolConfig,
    engine: Engine,
    length: Option<u64>,
    rng: &mut R,
) -> Result<TrialRecord> {
    let engine = config.resolve(engine)?;
    let l = match length {
        Some(0) => return Err(Error::param("length", "must be at least 1")),
        Some(l) => l,
        None => config.dist.sample(rng),
    };
    let (beta, max) = (config.beta, config.max_attempts);
    let gamma = config.spec.capacity();
    Ok(match (config.mode, engine) {
        (DecoderMode::NoMemory, Engine::Aggregated) => {
            run_memoryless_aggregated(gamma, l, beta, rng, max)
        }
        (DecoderMode::Memory, Engine::Aggregated) => {
            run_memory_aggregated(gamma, l, beta, config.r, rng, max)
        }
        (DecoderMode::NoMemory, _) => run_memoryless_bits(&config.spec, l, beta, rng, max),
        (DecoderMode::Memory, _) => run_memory_bits(&config.spec, l, beta, config.r, rng, max),
    })
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub records: Vec<TrialRecord>,
    pub censored: u64,
    pub wall_time: Duration,
}

impl Batch {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.records.len().max(1) as f64
    }
}

/// `n_trials` transfers in parallel; trial `i` always uses stream `i`, so
/// the output does not depend on scheduling.
pub fn run_batch(
    config: &ProtocolConfig,
    engine: Engine,
    length: Option<u64>,
    n_trials: u64,
    master_seed: u64,
) -> Result<Batch> {
    config.validate()?;
    if n_trials == 0 {
        return Err(Error::param("n_trials", "must be at least 1"));
    }
    config.resolve(engine)?;
    let start = Instant::now();
    let records = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, i);
            simulate_trial(config, engine, length, &mut rng).map(|mut rec| {
                rec.trial = i;
                rec
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let censored = records.iter().filter(|r| r.censored).count() as u64;
    Ok(Batch {
        records,
        censored,
        wall_time: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(spec: ChannelSpec, beta: f64, r: u32, mode: DecoderMode) -> ProtocolConfig {
        ProtocolConfig {
            beta,
            r,
            mode,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            spec,
            dist: CodewordDist::new(0.01, 1, None).unwrap(),
        }
    }

    #[test]
    fn strict_threshold() {
        assert_eq!(decode_threshold(0.5, 4), 3);
        assert_eq!(decode_threshold(0.5, 5), 3);
        assert_eq!(decode_threshold(0.29, 100), 30);
        assert_eq!(decode_threshold(0.75, 4), 4);
        assert_eq!(decode_threshold(0.6, 2), 2);
        assert_eq!(decode_threshold(0.1, 3), 1);
    }

    fn scripted(bits: &[u8]) -> impl FnMut() -> bool + '_ {
        let mut it = bits.iter().cycle();
        move || *it.next().unwrap() == 1
    }

    #[test]
    fn exactly_beta_l_does_not_decode() {
        // l = 4, β = 0.5: two delivered positions fail, three succeed
        let rec = memoryless_over(scripted(&[1, 1, 0, 0, 1, 1, 1, 0]), 4, 0.5, 10);
        assert_eq!((rec.attempts, rec.delay), (2, 8));
        let rec = memory_over(scripted(&[1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 1, 0]), 4, 0.5, 1, 10);
        assert_eq!((rec.attempts, rec.delay), (3, 12));
        // β·l = 29 computed as 28.999…: 29 received is still not enough
        let mut bits = vec![1u8; 29];
        bits.extend(vec![0u8; 71]);
        let rec = memoryless_over(scripted(&bits), 100, 0.29, 3);
        assert!(rec.censored);
        bits[29] = 1;
        let rec = memoryless_over(scripted(&bits), 100, 0.29, 3);
        assert_eq!(rec.attempts, 1);
    }

    #[test]
    fn memory_counts_distinct_positions() {
        // the same position delivered twice counts once
        let bits = [1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0];
        let rec = memory_over(scripted(&bits), 4, 0.5, 1, 10);
        assert_eq!(rec.attempts, 3);
        // r = 2 sends positions 0-1, then 2-3
        let bits = [1, 1, 1, 0];
        let rec = memory_over(scripted(&bits), 4, 0.5, 2, 10);
        assert_eq!((rec.attempts, rec.delay), (2, 4));
    }

    #[test]
    fn trunk_layout() {
        assert_eq!((0..3).map(|j| trunk_len(10, 3, j)).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(trunk_start(10, 3, 3), 10);
        assert_eq!((0..4).map(|j| trunk_len(2, 4, j)).sum::<u64>(), 2);
        assert_eq!(trunk_len(12, 4, 2), 3);
    }

    #[test]
    fn geometric_parameterisation() {
        let d = CodewordDist::new(0.01, 1, None).unwrap();
        assert!((d.unbounded_mean() - 100.5).abs() < 0.01);
        let m = CodewordDist::from_mean(100.0, 1, None).unwrap();
        assert!((m.unbounded_mean() - 100.0).abs() < 1e-9);
        assert!(CodewordDist::new(0.01, 5, Some(5)).is_err());
        assert!(CodewordDist::new(-1.0, 1, None).is_err());
    }

    #[test]
    fn pmf_and_sf_agree() {
        for bound in [None, Some(50)] {
            let d = CodewordDist::new(0.05, 3, bound).unwrap();
            let mut acc = 0.0;
            for l in 0..400 {
                acc += d.pmf(l);
                assert!((1.0 - acc - d.sf(l)).abs() < 1e-12, "{l} {bound:?}");
            }
        }
    }

    #[test]
    fn sampled_lengths_follow_law() {
        let d = CodewordDist::new(0.01, 1, None).unwrap();
        let mut rng = trial_rng(1, 0);
        let n = 1_000_000;
        let mut xs: Vec<u64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<u64>() as f64 / n as f64;
        assert!((mean - 100.5).abs() < 1.0);
        xs.sort_unstable();
        // tail slope between the 10% and 0.1% quantiles
        let q = |p: f64| xs[((1.0 - p) * n as f64) as usize] as f64;
        let slope = (0.001f64.ln() - 0.1f64.ln()) / (q(0.001) - q(0.1));
        assert!((slope + 0.01).abs() < 0.0005, "{slope}");
    }

    #[test]
    fn bounded_lengths_stay_below_bound() {
        let d = CodewordDist::new(0.01, 1, Some(30)).unwrap();
        let mut rng = trial_rng(2, 0);
        assert!((0..100_000).all(|_| d.sample(&mut rng) < 30));
    }

    #[test]
    fn perfect_channel_decodes_first_time() {
        let spec = ChannelSpec::iid(1.0 - 1e-15).unwrap();
        for mode in [DecoderMode::Memory, DecoderMode::NoMemory] {
            let c = cfg(spec.clone(), 0.9, 1, mode);
            let b = run_batch(&c, Engine::BitLevel, None, 500, 9).unwrap();
            assert!(b.records.iter().all(|r| r.attempts == 1 && r.delay == r.length));
        }
    }

    #[test]
    fn two_trunks_need_two_rounds_above_half() {
        let spec = ChannelSpec::iid(1.0 - 1e-15).unwrap();
        let c = cfg(spec, 0.6, 2, DecoderMode::Memory);
        // one trunk of ⌈L/2⌉ positions cannot exceed 0.6·L once L ≥ 5
        for l in [5, 10, 11, 40] {
            let b = run_batch(&c, Engine::BitLevel, Some(l), 200, 3).unwrap();
            assert!(b.records.iter().all(|r| r.attempts == 2));
        }
    }

    #[test]
    fn delay_accounting() {
        let spec = ChannelSpec::iid(0.3).unwrap();
        let nm = cfg(spec.clone(), 0.2, 1, DecoderMode::NoMemory);
        for engine in [Engine::BitLevel, Engine::Aggregated] {
            let b = run_batch(&nm, engine, None, 2000, 1).unwrap();
            assert!(b.records.iter().all(|r| r.delay == r.attempts * r.length));
            let m = cfg(spec.clone(), 0.4, 4, DecoderMode::Memory);
            let b = run_batch(&m, engine, Some(12), 2000, 1).unwrap();
            assert!(b.records.iter().all(|r| r.delay == r.attempts * 3));
        }
    }

    #[test]
    fn censoring_at_ceiling() {
        let spec = ChannelSpec::iid(0.01).unwrap();
        let mut c = cfg(spec, 0.9, 1, DecoderMode::NoMemory);
        c.max_attempts = 5;
        let b = run_batch(&c, Engine::Auto, Some(50), 100, 4).unwrap();
        assert_eq!(b.censored, 100);
        assert!(b.records.iter().all(|r| r.attempts == 5 && r.delay == 250));
    }

    #[test]
    fn empty_trunks_cost_nothing() {
        // l = 1 over r = 3 trunks: only the first trunk holds a position
        let spec = ChannelSpec::iid(0.5).unwrap();
        let c = cfg(spec, 0.5, 3, DecoderMode::Memory);
        for engine in [Engine::Aggregated, Engine::BitLevel] {
            let b = run_batch(&c, engine, Some(1), 200, 4).unwrap();
            for r in &b.records {
                assert_eq!(r.attempts % 3, 1);
                assert_eq!(r.delay, r.attempts.div_ceil(3));
            }
        }
    }

    #[test]
    fn memory_never_slower_than_memoryless() {
        let spec = ChannelSpec::markov(1, vec![vec![0.8, 0.2], vec![0.3, 0.7]]).unwrap();
        for i in 0..5000 {
            let a = run_memory_bits(&spec, 20, 0.5, 1, &mut trial_rng(77, i), 1000);
            let b = run_memoryless_bits(&spec, 20, 0.5, &mut trial_rng(77, i), 1000);
            assert!(a.attempts <= b.attempts, "trial {i}");
        }
    }

    #[test]
    fn batches_are_deterministic() {
        let spec = ChannelSpec::markov(1, vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap();
        let c = cfg(spec, 0.1, 2, DecoderMode::Memory);
        let a = run_batch(&c, Engine::Auto, None, 300, 11).unwrap();
        let b = run_batch(&c, Engine::Auto, None, 300, 11).unwrap();
        let d = run_batch(&c, Engine::Auto, None, 300, 12).unwrap();
        assert_eq!(a.records, b.records);
        assert_ne!(a.records, d.records);
        assert!(a.records.iter().enumerate().all(|(i, r)| r.trial == i as u64));
    }

    #[test]
    fn config_validation() {
        let spec = ChannelSpec::iid(0.3).unwrap();
        assert!(cfg(spec.clone(), 0.5, 2, DecoderMode::NoMemory).validate().is_err());
        assert!(cfg(spec.clone(), 1.0, 1, DecoderMode::Memory).validate().is_err());
        let mk = ChannelSpec::markov(1, vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let c = cfg(mk, 0.5, 1, DecoderMode::Memory);
        assert!(run_batch(&c, Engine::Aggregated, None, 10, 1).is_err());
    }

    #[test]
    fn serde_shapes() {
        let d: CodewordDist = serde_json::from_str(r#"{"mean":100}"#).unwrap();
        assert!((d.unbounded_mean() - 100.0).abs() < 1e-9);
        let again: CodewordDist =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(again, d);
        assert!(serde_json::from_str::<CodewordDist>(r#"{"lambda":0.1,"mean":3}"#).is_err());
        assert_eq!(
            serde_json::to_string(&DecoderMode::NoMemory).unwrap(),
            "\"no-memory\""
        );
    }

    proptest! {
        #[test]
        fn threshold_is_strict(beta in 0.01f64..0.99, l in 1u64..5000) {
            let need = decode_threshold(beta, l);
            prop_assert!(need as f64 > beta * l as f64 - 1e-9);
            prop_assert!((need - 1) as f64 <= beta * l as f64 + 1e-9);
        }

        #[test]
        fn trunks_partition(l in 1u64..500, r in 1u32..12) {
            let total: u64 = (0..r).map(|j| trunk_len(l, r, j)).sum();
            prop_assert_eq!(total, l);
            let sizes: Vec<u64> = (0..r).map(|j| trunk_len(l, r, j)).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn delay_bounded_by_rounds(seed in 0u64..1000, r in 1u32..4) {
            let spec = ChannelSpec::iid(0.3).unwrap();
            let rec = run_memory_bits(&spec, 17, 0.6, r, &mut trial_rng(seed, 0), 200);
            prop_assert!(rec.delay <= rec.attempts * 17);
            prop_assert!(rec.delay >= (rec.attempts / r as u64) * 17);
        }
    }
}

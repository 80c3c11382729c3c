//! Large-deviation rate functions and the delay-tail predictions built on
//! them.
//!
//! For `n` rounds over independent copies of the channel chain, `ρ_n(θ)` is
//! the Perron root of `diag(e^{θ·∏_j f(σ_j)}) Π^{⊗n}` where `f` is the
//! erasure indicator of a state. `Λ_n(β)` is its Legendre transform at
//! `1 − β` and `μ_n` the code rate where `Λ_n` vanishes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::linalg::{self, KroneckerPower, PerronOptions, DEFAULT_KRONECKER_CAP};
use crate::oracle;

pub const DEFAULT_N_MAX: u32 = 200;

const MU_SLACK: f64 = 1e-12;
const INITIAL_BRACKET: f64 = 50.0;
const MAX_BRACKET: f64 = 500.0;

/// Inputs shared by every rate computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub beta: f64,
    pub lambda: f64,
    pub r: u32,
    pub spec: ChannelSpec,
    pub n_max: u32,
}

impl RateParams {
    pub fn new(beta: f64, lambda: f64, r: u32, spec: ChannelSpec) -> Result<Self> {
        let p = Self {
            beta,
            lambda,
            r,
            spec,
            n_max: DEFAULT_N_MAX,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_n_max(mut self, n_max: u32) -> Result<Self> {
        self.n_max = n_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("{} is not positive", self.lambda)));
        }
        if self.r == 0 {
            return Err(Error::param("r", "trunk count must be at least 1"));
        }
        if self.n_max == 0 {
            return Err(Error::param("n_max", "must be at least 1"));
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::param("beta", format!("{beta} is not in (0, 1)")))
    }
}

fn check_n(n: u32) -> Result<()> {
    if n == 0 {
        Err(Error::param("n", "round count must be at least 1"))
    } else {
        Ok(())
    }
}

/// Largest `n` whose `n`-fold joint chain fits under `cap` rows.
pub fn max_rounds(spec: &ChannelSpec, cap: usize) -> u32 {
    if spec.order() == 0 {
        return u32::MAX;
    }
    let mut n = 0;
    while linalg::kronecker_dim(spec.num_states(), n + 1, cap).is_some() {
        n += 1;
    }
    n
}

/// `log(1 − μ_n) = n · log(1 − γ)`.
///
/// At `θ = 0` the left and right Perron vectors of `Π^{⊗n}` are `π^{⊗n}`
/// and `1`, so `(log ρ_n)'(0) = (Σ_s π(s) f(s))^n` for every order.
pub fn log_one_minus_mu(spec: &ChannelSpec, n: u32) -> f64 {
    n as f64 * (-spec.capacity()).ln_1p()
}

/// `μ_n = 1 − (1 − γ)^n`.
pub fn mu_n(spec: &ChannelSpec, n: u32) -> Result<f64> {
    check_n(n)?;
    Ok(-log_one_minus_mu(spec, n).exp_m1())
}

/// `log ρ_n(θ)`.
pub fn log_rho_n(theta: f64, spec: &ChannelSpec, n: u32) -> Result<f64> {
    log_rho_n_capped(theta, spec, n, DEFAULT_KRONECKER_CAP)
}

pub fn rho_n(theta: f64, spec: &ChannelSpec, n: u32) -> Result<f64> {
    Ok(log_rho_n(theta, spec, n)?.exp())
}

pub fn log_rho_n_capped(theta: f64, spec: &ChannelSpec, n: u32, cap: usize) -> Result<f64> {
    check_n(n)?;
    if !theta.is_finite() {
        return Err(Error::param("theta", "must be finite"));
    }
    match spec.transition() {
        None => {
            let log_erased = log_one_minus_mu(spec, n);
            let log_received = (-log_erased.exp()).ln_1p();
            Ok(logaddexp(log_received, log_erased + theta))
        }
        Some(m) => {
            let op = KroneckerPower::new(m.clone(), n, cap).map_err(|_| {
                Error::ResourceLimit(format!(
                    "rho_n needs a {}^{n}-row Kronecker power (k = {}, n = {n}), above the cap of {cap}",
                    spec.num_states(),
                    spec.order()
                ))
            })?;
            let dim = op.dim();
            // joint state is fully erased iff every digit has a 0 newest bit
            let k = spec.order();
            let newest_bits: usize = (0..n).map(|j| 1usize << (k * j)).sum();
            // scale by e^{-θ} for θ > 0 so every tilt entry is at most 1
            let (hit, miss, shift) = if theta > 0.0 {
                (1.0, (-theta).exp(), theta)
            } else {
                (theta.exp(), 1.0, 0.0)
            };
            let tilt: Vec<f64> = (0..dim)
                .map(|s| if s & newest_bits == 0 { hit } else { miss })
                .collect();
            let mut scratch = vec![0.0; dim];
            let rho = linalg::perron_root(
                dim,
                |x, y| {
                    op.apply(x, y, &mut scratch);
                    for (yi, t) in y.iter_mut().zip(&tilt) {
                        *yi *= t;
                    }
                },
                PerronOptions::default(),
            )
            .map_err(|e| {
                Error::Numeric(format!("rho_n(theta = {theta}, n = {n}): {e}"))
            })?;
            Ok(rho.ln() + shift)
        }
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// Binary relative entropy `KL(β ‖ μ)` with `log(1 − μ)` passed directly to
/// keep precision when `1 − μ` underflows.
pub fn binary_kl(beta: f64, log_mu: f64, log_one_minus_mu: f64) -> f64 {
    let a = if beta > 0.0 { beta * (beta.ln() - log_mu) } else { 0.0 };
    let b = if beta < 1.0 {
        (1.0 - beta) * ((-beta).ln_1p() - log_one_minus_mu)
    } else {
        0.0
    };
    (a + b).max(0.0)
}

/// `Λ_n(β)`, by closed form for the memoryless channel and by Legendre
/// transform of the Perron root otherwise.
pub fn lambda_n(beta: f64, spec: &ChannelSpec, n: u32) -> Result<f64> {
    if spec.order() == 0 {
        lambda_n_closed_form(beta, spec, n)
    } else {
        lambda_n_numeric(beta, spec, n)
    }
}

/// Memoryless closed form `β log(β/μ_n) + (1−β) log((1−β)/(1−γ)^n)`.
pub fn lambda_n_closed_form(beta: f64, spec: &ChannelSpec, n: u32) -> Result<f64> {
    check_beta(beta)?;
    check_n(n)?;
    if spec.order() != 0 {
        return Err(Error::param("spec", "closed form needs a memoryless channel"));
    }
    let l1m = log_one_minus_mu(spec, n);
    let log_mu = (-l1m.exp()).ln_1p();
    Ok(binary_kl(beta, log_mu, l1m))
}

/// `sup_θ {θ(1 − β) − log ρ_n(θ)}` by golden-section search.
pub fn lambda_n_numeric(beta: f64, spec: &ChannelSpec, n: u32) -> Result<f64> {
    check_beta(beta)?;
    check_n(n)?;
    let mu = mu_n(spec, n)?;
    if (mu - beta).abs() <= f64::EPSILON * 4.0 {
        return Ok(0.0);
    }
    // the objective has slope μ_n − β at θ = 0
    let dir = if mu > beta { 1.0 } else { -1.0 };
    let objective = |t: f64| -> Result<f64> {
        let theta = dir * t;
        Ok(theta * (1.0 - beta) - log_rho_n(theta, spec, n)?)
    };
    let mut width = INITIAL_BRACKET;
    loop {
        let (t, value) = golden_max(&objective, 0.0, width)?;
        if t < width * (1.0 - 1e-6) {
            return Ok(value.max(0.0));
        }
        if width >= MAX_BRACKET {
            return Err(Error::Numeric(format!(
                "Lambda_n(beta = {beta}, n = {n}): maximiser not bracketed within |theta| <= {MAX_BRACKET}"
            )));
        }
        width = (width * 2.0).min(MAX_BRACKET);
    }
}

fn golden_max<F>(f: &F, mut a: f64, mut b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a) > 1e-11 * (1.0 + c.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    let ft = f(t)?;
    let fb = f(b)?;
    Ok(if fb > ft { (b, fb) } else { (t, ft) })
}

/// Smallest `n ≤ n_max` with `μ_n ≥ β`.
pub fn alpha(beta: f64, spec: &ChannelSpec, n_max: u32) -> Result<u32> {
    check_beta(beta)?;
    for n in 1..=n_max {
        if mu_n(spec, n)? >= beta - MU_SLACK {
            return Ok(n);
        }
    }
    Err(Error::Horizon(format!(
        "no n <= {n_max} has mu_n >= beta = {beta}"
    )))
}

/// `⌈log(1 − β) / log(1 − γ)⌉` for the memoryless channel.
pub fn alpha_closed_form(beta: f64, gamma: f64) -> u32 {
    let x = (-beta).ln_1p() / (-gamma).ln_1p();
    ceil_robust(x).max(1.0) as u32
}

/// Ceiling that treats values within 1e-9 of an integer as that integer.
pub(crate) fn ceil_robust(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Infima over rounds of the per-round decay rates, with argmins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaO {
    pub lambda1_o: f64,
    pub lambda2_o: f64,
    pub lambda3_o: f64,
    /// Multiplier convention: raw argmin plus one.
    pub n1_o: u32,
    pub n2_o: u32,
    pub n1_argmin: u32,
    pub n2_argmin: u32,
    /// Last `n` included in the infima.
    pub horizon: u32,
    pub lambda1_at_horizon: f64,
    pub lambda2_at_horizon: f64,
}

/// `Λ_n(β)` for `n = 1..=upto`, stopping early where the Kronecker cap bites.
fn lambda_table(params: &RateParams, from: u32, upto: u32) -> Result<BTreeMap<u32, f64>> {
    let limit = max_rounds(&params.spec, DEFAULT_KRONECKER_CAP);
    let mut out = BTreeMap::new();
    for n in from.max(1)..=upto.min(limit) {
        out.insert(n, lambda_n(params.beta, &params.spec, n)?);
    }
    Ok(out)
}

pub fn lambda_o(params: &RateParams) -> Result<LambdaO> {
    params.validate()?;
    let a = alpha(params.beta, &params.spec, params.n_max)?;
    let lam = params.lambda;
    let limit = max_rounds(&params.spec, DEFAULT_KRONECKER_CAP);
    let horizon = params.n_max.min(limit.saturating_sub(1)).max(1);
    let table = lambda_table(params, a.saturating_sub(1), horizon + 1)?;
    let get = |n: u32| -> Result<f64> {
        table.get(&n).copied().ok_or_else(|| {
            Error::ResourceLimit(format!(
                "Lambda_{n} is beyond the Kronecker cap for k = {}",
                params.spec.order()
            ))
        })
    };
    let mut best1 = (f64::INFINITY, 0u32);
    let mut best2 = (f64::INFINITY, 0u32);
    let mut last1 = 0.0;
    let mut last2 = 0.0;
    for n in 1..=horizon {
        let v1 = (lam + if n >= a { get(n)? } else { 0.0 }) / (n as f64 + 1.0);
        let v2 = (lam + if n + 1 >= a { get(n + 1)? } else { 0.0 }) / (n as f64 + 1.0);
        if v1 < best1.0 {
            best1 = (v1, n);
        }
        if v2 < best2.0 {
            best2 = (v2, n);
        }
        last1 = v1;
        last2 = v2;
    }
    Ok(LambdaO {
        lambda1_o: best1.0,
        lambda2_o: best2.0,
        lambda3_o: lambda3_o(params),
        n1_o: best1.1 + 1,
        n2_o: best2.1 + 1,
        n1_argmin: best1.1,
        n2_argmin: best2.1,
        horizon,
        lambda1_at_horizon: last1,
        lambda2_at_horizon: last2,
    })
}

/// `λ` above capacity, `λr / ⌈rβ/γ⌉` otherwise.
pub fn lambda3_o(params: &RateParams) -> f64 {
    let gamma = params.spec.capacity();
    if params.beta > gamma {
        params.lambda
    } else {
        let r = params.r as f64;
        params.lambda * r / ceil_robust(r * params.beta / gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Bracket on the decay rate of memory-decoder delay for general `r`.
pub fn memory_decay_bounds(o: &LambdaO) -> MemoryBounds {
    MemoryBounds {
        lower: o.lambda1_o.min(o.lambda3_o),
        upper: o.lambda2_o.min(o.lambda3_o),
    }
}

/// Exact decay rate of memory-decoder delay when `r = 1`.
pub fn memory_rate_r1(o: &LambdaO, lambda: f64) -> f64 {
    o.lambda1_o.min(lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteSupport {
    pub b: u64,
    pub waist: u64,
    pub multiplier: u32,
    pub lambda_b: f64,
    pub lambda_b1: f64,
    pub lambda_b2: f64,
}

pub fn waist_multiplier(o: &LambdaO, r: u32) -> u32 {
    if r == 1 {
        o.n1_o
    } else {
        o.n2_o
    }
}

/// Main-body rates `(Λᵇ, Λᵇ₁, Λᵇ₂)`.
pub fn main_body_rates(o: &LambdaO, lambda: f64) -> (f64, f64, f64) {
    let on = |argmin: u32| if argmin == 1 { 1.0 } else { 0.0 };
    let lb = o.lambda1_o + (lambda - o.lambda1_o).min(0.0) * on(o.n1_argmin);
    let lb1 = o.lambda1_o + (o.lambda3_o - o.lambda1_o).min(0.0) * on(o.n2_argmin);
    let lb2 = o.lambda2_o + (o.lambda3_o - o.lambda2_o).min(0.0) * on(o.n2_argmin);
    (lb, lb1, lb2)
}

pub fn finite_support_report(params: &RateParams, o: &LambdaO, b: u64) -> Result<FiniteSupport> {
    if b == 0 {
        return Err(Error::param("b", "maximum codeword length must be at least 1"));
    }
    let multiplier = waist_multiplier(o, params.r);
    let (lambda_b, lambda_b1, lambda_b2) = main_body_rates(o, params.lambda);
    Ok(FiniteSupport {
        b,
        waist: multiplier as u64 * b,
        multiplier,
        lambda_b,
        lambda_b1,
        lambda_b2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class")]
pub enum Threshold {
    /// Delay tail is polynomial with this exponent.
    HeavyTail { exponent: f64, zero_throughput: bool },
    /// Delay tail is exponential with this rate.
    LightTail { rate: f64 },
    /// Code rate equals capacity; no classification.
    Boundary,
}

/// Classification of no-memory delay tails by code rate against capacity.
pub fn threshold_classify(params: &RateParams) -> Result<Threshold> {
    params.validate()?;
    let gamma = params.spec.capacity();
    if (params.beta - gamma).abs() <= 1e-12 {
        return Ok(Threshold::Boundary);
    }
    let l1 = lambda_n(params.beta, &params.spec, 1)?;
    Ok(if params.beta > gamma {
        let exponent = params.lambda / l1;
        Threshold::HeavyTail {
            exponent,
            zero_throughput: exponent < 1.0,
        }
    } else {
        Threshold::LightTail {
            rate: params.lambda.min(l1),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NbBranch {
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nb {
    pub b: u64,
    pub value: f64,
    pub branch: NbBranch,
    pub exact: Option<f64>,
    pub asymptotic: f64,
}

/// Mean attempts at the longest codeword, `1 / P[N_f = 1 | L = b]`.
pub fn n_b(spec: &ChannelSpec, beta: f64, b: u64) -> Result<Nb> {
    check_beta(beta)?;
    if b == 0 {
        return Err(Error::param("b", "must be at least 1"));
    }
    let asymptotic = (b as f64 * lambda_n(beta, spec, 1)?).exp();
    match oracle::single_attempt_success(spec, b, beta) {
        Ok(p) if p > 0.0 => Ok(Nb {
            b,
            value: 1.0 / p,
            branch: NbBranch::Exact,
            exact: Some(1.0 / p),
            asymptotic,
        }),
        Ok(_) | Err(Error::ResourceLimit(_)) => Ok(Nb {
            b,
            value: asymptotic,
            branch: NbBranch::Asymptotic,
            exact: None,
            asymptotic,
        }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ThroughputExponent {
    Applicable { rate: f64 },
    NotApplicable { reason: ThroughputGate },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThroughputGate {
    BetaNotAboveCapacity,
    LambdaNotBelowLambda1,
}

/// Predicted minimum decay rate of throughput in `b`, `Λ_1 − λ`.
pub fn throughput_exponent(params: &RateParams) -> Result<ThroughputExponent> {
    params.validate()?;
    if params.beta <= params.spec.capacity() {
        return Ok(ThroughputExponent::NotApplicable {
            reason: ThroughputGate::BetaNotAboveCapacity,
        });
    }
    let l1 = lambda_n(params.beta, &params.spec, 1)?;
    Ok(if params.lambda < l1 {
        ThroughputExponent::Applicable {
            rate: l1 - params.lambda,
        }
    } else {
        ThroughputExponent::NotApplicable {
            reason: ThroughputGate::LambdaNotBelowLambda1,
        }
    })
}

/// Every analytical output for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub alpha: u32,
    pub mu: BTreeMap<u32, f64>,
    pub lambda_n: BTreeMap<u32, f64>,
    pub lambda1_o: f64,
    pub lambda2_o: f64,
    pub lambda3_o: f64,
    pub n1_o: u32,
    pub n2_o: u32,
    pub n1_argmin: u32,
    pub n2_argmin: u32,
    pub horizon: u32,
    pub lambda1_at_horizon: f64,
    pub lambda2_at_horizon: f64,
    pub memory_bounds: MemoryBounds,
    pub memory_rate_r1: f64,
    pub finite_waist_multiplier: u32,
    pub lambda_b: f64,
    pub lambda_b1: f64,
    pub lambda_b2: f64,
    pub threshold: Threshold,
    pub nb: Vec<Nb>,
    pub throughput_exponent: ThroughputExponent,
}

/// `table_len` bounds how many `n` appear in the `mu` and `lambda_n` tables.
pub fn rate_report(params: &RateParams, b_grid: &[u64], table_len: u32) -> Result<RateReport> {
    let o = lambda_o(params)?;
    let a = alpha(params.beta, &params.spec, params.n_max)?;
    let upto = table_len.max(a).min(max_rounds(&params.spec, DEFAULT_KRONECKER_CAP));
    let mut mu = BTreeMap::new();
    for n in 1..=upto {
        mu.insert(n, mu_n(&params.spec, n)?);
    }
    let lambda_n = lambda_table(params, 1, upto)?;
    let (lambda_b, lambda_b1, lambda_b2) = main_body_rates(&o, params.lambda);
    let nb = b_grid
        .iter()
        .map(|&b| n_b(&params.spec, params.beta, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateReport {
        alpha: a,
        mu,
        lambda_n,
        lambda1_o: o.lambda1_o,
        lambda2_o: o.lambda2_o,
        lambda3_o: o.lambda3_o,
        n1_o: o.n1_o,
        n2_o: o.n2_o,
        n1_argmin: o.n1_argmin,
        n2_argmin: o.n2_argmin,
        horizon: o.horizon,
        lambda1_at_horizon: o.lambda1_at_horizon,
        lambda2_at_horizon: o.lambda2_at_horizon,
        memory_bounds: memory_decay_bounds(&o),
        memory_rate_r1: memory_rate_r1(&o, params.lambda),
        finite_waist_multiplier: waist_multiplier(&o, params.r),
        lambda_b,
        lambda_b1,
        lambda_b2,
        threshold: threshold_classify(params)?,
        nb,
        throughput_exponent: throughput_exponent(params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn iid(g: f64) -> ChannelSpec {
        ChannelSpec::iid(g).unwrap()
    }

    /// An i.i.d. channel written as an order-1 chain with equal rows.
    fn embedded(g: f64) -> ChannelSpec {
        ChannelSpec::markov(1, vec![vec![1.0 - g, g], vec![1.0 - g, g]]).unwrap()
    }

    fn gilbert() -> ChannelSpec {
        ChannelSpec::markov(1, vec![vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap()
    }

    #[test]
    fn rho_at_zero_is_one() {
        for spec in [iid(0.3), gilbert(), embedded(0.4)] {
            for n in 1..=4 {
                assert_relative_eq!(rho_n(0.0, &spec, n).unwrap(), 1.0, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn rho_closed_form_value() {
        // erasure probability 0.8 carries the tilt
        let v = rho_n(1.0, &iid(0.2), 1).unwrap();
        assert_relative_eq!(v, 0.2 + 0.8 * std::f64::consts::E, max_relative = 1e-14);
        assert!((v - 2.374625).abs() < 1e-6);
    }

    #[test]
    fn embedded_rho_matches_iid() {
        for n in 1..=5 {
            for theta in [-3.0, -0.5, 0.7, 2.0, 10.0] {
                let a = rho_n(theta, &iid(0.3), n).unwrap();
                let b = rho_n(theta, &embedded(0.3), n).unwrap();
                assert_relative_eq!(a, b, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn lambda1_known_value() {
        let v = lambda_n(0.25, &iid(0.2), 1).unwrap();
        assert!((v - 0.0074).abs() < 1e-4, "{v}");
        let num = lambda_n_numeric(0.25, &iid(0.2), 1).unwrap();
        assert!((v - num).abs() < 1e-8);
    }

    #[test]
    fn lambda3_kl_value() {
        let expected = 0.5 * (0.5f64 / 0.578125).ln() + 0.5 * (0.5f64 / 0.421875).ln();
        let closed = lambda_n(0.5, &iid(0.25), 3).unwrap();
        let num = lambda_n_numeric(0.5, &iid(0.25), 3).unwrap();
        assert_relative_eq!(closed, expected, max_relative = 1e-12);
        assert!((num - expected).abs() < 1e-8);
    }

    #[test]
    fn lambda_vanishes_at_mu() {
        for spec in [iid(0.25), gilbert()] {
            for n in 1..=4 {
                let mu = mu_n(&spec, n).unwrap();
                assert!(lambda_n(mu, &spec, n).unwrap() <= 1e-10);
                assert!(lambda_n_numeric(mu, &spec, n).unwrap() <= 1e-8);
            }
        }
    }

    #[test]
    fn mu_values() {
        assert_relative_eq!(mu_n(&iid(0.25), 3).unwrap(), 0.578125, max_relative = 1e-14);
        let mut last = 0.0;
        for n in 1..200 {
            let m = mu_n(&iid(0.05), n).unwrap();
            assert!(m >= last);
            last = m;
        }
        assert!(last > 0.9999);
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(0.75, &iid(0.1), 200).unwrap(), 14);
        assert_eq!(alpha(0.5, &iid(0.25), 200).unwrap(), 3);
        assert_eq!(alpha(0.1, &iid(0.25), 200).unwrap(), 1);
        assert!(matches!(alpha(0.99, &iid(0.01), 10), Err(Error::Horizon(_))));
    }

    #[test]
    fn light_tail_finite_support_rates() {
        let p = RateParams::new(0.75, 0.01, 1, iid(0.1)).unwrap();
        let o = lambda_o(&p).unwrap();
        assert_eq!(o.n1_argmin, 13);
        assert_eq!(o.n1_o, 14);
        assert!((o.lambda1_o - 0.01 / 14.0).abs() < 1e-8);
        assert_eq!(o.lambda3_o, 0.01);
        let fs = finite_support_report(&p, &o, 200).unwrap();
        assert_eq!(fs.waist, 2800);
        assert!((fs.lambda_b - 0.01 / 14.0).abs() < 1e-8);
        let fs2 = finite_support_report(&p, &o, 400).unwrap();
        assert_eq!(fs2.waist, 2 * fs.waist);
    }

    #[test]
    fn memory_bracket_values() {
        for r in [1, 3, 5] {
            let p = RateParams::new(0.5, 0.01, r, iid(0.25)).unwrap();
            let o = lambda_o(&p).unwrap();
            assert!((o.lambda1_o - 0.01 / 3.0).abs() < 1e-12);
            assert!((o.lambda2_o - 0.005).abs() < 1e-12);
            let b = memory_decay_bounds(&o);
            assert!(b.lower <= b.upper);
            assert!(memory_rate_r1(&o, p.lambda) <= b.lower + 1e-15);
        }
    }

    #[test]
    fn lambda3_below_capacity() {
        let p = RateParams::new(0.2, 0.01, 1, iid(0.25)).unwrap();
        assert_eq!(lambda3_o(&p), 0.01);
        let p = RateParams::new(0.5, 0.01, 3, iid(0.25)).unwrap();
        assert_eq!(lambda3_o(&p), 0.01);
        let p = RateParams::new(0.1, 0.01, 5, iid(0.25)).unwrap();
        // ⌈5·0.1/0.25⌉ = 2
        assert_relative_eq!(lambda3_o(&p), 0.01 * 5.0 / 2.0);
    }

    #[test]
    fn threshold_classes() {
        let p = RateParams::new(0.25, 0.01, 1, iid(0.2)).unwrap();
        match threshold_classify(&p).unwrap() {
            Threshold::HeavyTail {
                exponent,
                zero_throughput,
            } => {
                assert!((exponent - 1.354).abs() < 0.02, "{exponent}");
                assert!(!zero_throughput);
            }
            other => panic!("{other:?}"),
        }
        let p = RateParams::new(0.25, 0.005, 1, iid(0.2)).unwrap();
        assert!(matches!(
            threshold_classify(&p).unwrap(),
            Threshold::HeavyTail {
                zero_throughput: true,
                ..
            }
        ));
        let p = RateParams::new(0.2, 100.0, 1, iid(0.25)).unwrap();
        let l1 = lambda_n(0.2, &iid(0.25), 1).unwrap();
        assert_eq!(threshold_classify(&p).unwrap(), Threshold::LightTail { rate: l1 });
        let p = RateParams::new(0.25, 0.01, 1, iid(0.25)).unwrap();
        assert_eq!(threshold_classify(&p).unwrap(), Threshold::Boundary);
    }

    #[test]
    fn nb_asymptote_and_exact() {
        let spec = iid(0.2);
        let expected = [4.3772, 19.1595, 83.8641, 367.0865];
        for (b, want) in [200u64, 400, 600, 800].into_iter().zip(expected) {
            let nb = n_b(&spec, 0.25, b).unwrap();
            assert!((nb.asymptotic / want - 1.0).abs() < 0.005);
            assert_eq!(nb.branch, NbBranch::Exact);
        }
        let nb = n_b(&spec, 0.25, 20).unwrap();
        let tail = oracle::binomial::sf(20, 5, 0.2);
        assert_relative_eq!(nb.value, 1.0 / tail, max_relative = 1e-12);
        let mut last = f64::INFINITY;
        for b in (200..=2000).step_by(200) {
            let nb = n_b(&spec, 0.25, b).unwrap();
            let gap = (nb.value.ln() / b as f64 - lambda_n(0.25, &spec, 1).unwrap()).abs();
            assert!(gap < last);
            last = gap;
        }
    }

    #[test]
    fn throughput_gate() {
        let p = RateParams::new(0.25, 0.005, 1, iid(0.2)).unwrap();
        match throughput_exponent(&p).unwrap() {
            ThroughputExponent::Applicable { rate } => {
                assert!((rate - 0.0024).abs() < 1e-4);
                assert!(rate > 0.0);
            }
            other => panic!("{other:?}"),
        }
        let p = RateParams::new(0.25, 0.01, 1, iid(0.2)).unwrap();
        assert!(matches!(
            throughput_exponent(&p).unwrap(),
            ThroughputExponent::NotApplicable { .. }
        ));
    }

    #[test]
    fn markov_rates_respect_cap() {
        assert_eq!(max_rounds(&gilbert(), DEFAULT_KRONECKER_CAP), 12);
        let p = RateParams::new(0.5, 0.01, 1, gilbert())
            .unwrap()
            .with_n_max(6)
            .unwrap();
        let o = lambda_o(&p).unwrap();
        assert_eq!(o.horizon, 6);
        assert!(matches!(
            log_rho_n(1.0, &gilbert(), 13),
            Err(Error::ResourceLimit(_))
        ));
        let report = rate_report(&p, &[10], 5).unwrap();
        assert_eq!(report.nb[0].branch, NbBranch::Exact);
    }

    #[test]
    fn report_serialises_flat() {
        let p = RateParams::new(0.25, 0.01, 1, iid(0.2)).unwrap();
        let report = rate_report(&p, &[200, 400], 5).unwrap();
        let v = serde_json::to_value(&report).unwrap();
        for key in [
            "alpha",
            "mu",
            "lambda_n",
            "lambda1_o",
            "lambda2_o",
            "lambda3_o",
            "n1_o",
            "n2_o",
            "memory_bounds",
            "memory_rate_r1",
            "finite_waist_multiplier",
            "lambda_b",
            "lambda_b1",
            "lambda_b2",
            "threshold",
            "nb",
            "throughput_exponent",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let back: RateReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, report);
    }

    proptest! {
        #[test]
        fn log_rho_is_convex(g in 0.05f64..0.95, n in 1u32..5, theta in -5.0f64..5.0) {
            let h = 0.05;
            for spec in [iid(g), embedded(g)] {
                let f = |t: f64| log_rho_n(t, &spec, n).unwrap();
                let second = f(theta + h) - 2.0 * f(theta) + f(theta - h);
                prop_assert!(second >= -1e-9);
            }
        }

        #[test]
        fn closed_form_matches_optimizer(beta in 0.02f64..0.98, g in 0.02f64..0.98, n in 1u32..8) {
            let spec = iid(g);
            let a = lambda_n_closed_form(beta, &spec, n).unwrap();
            let b = lambda_n_numeric(beta, &spec, n).unwrap();
            prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
            prop_assert!(a >= 0.0);
        }

        #[test]
        fn embedded_lambda_matches(beta in 0.05f64..0.95, g in 0.05f64..0.95, n in 1u32..4) {
            let a = lambda_n_closed_form(beta, &iid(g), n).unwrap();
            let b = lambda_n(beta, &embedded(g), n).unwrap();
            prop_assert!((a - b).abs() <= 1e-8, "{} vs {}", a, b);
        }

        #[test]
        fn alpha_matches_ceiling(beta in 0.01f64..0.99, g in 0.01f64..0.99) {
            let spec = iid(g);
            prop_assert_eq!(alpha(beta, &spec, 100_000).unwrap(), alpha_closed_form(beta, g));
        }

        #[test]
        fn bounds_are_ordered(beta in 0.05f64..0.95, g in 0.05f64..0.95, lam in 0.001f64..0.1, r in 1u32..6) {
            let p = RateParams::new(beta, lam, r, iid(g)).unwrap().with_n_max(2000).unwrap();
            let o = lambda_o(&p).unwrap();
            let b = memory_decay_bounds(&o);
            prop_assert!(b.lower <= b.upper + 1e-15);
            let p1 = RateParams { r: 1, ..p.clone() };
            let o1 = lambda_o(&p1).unwrap();
            prop_assert!(memory_rate_r1(&o1, lam) <= b.lower + 1e-15);
        }
    }
}

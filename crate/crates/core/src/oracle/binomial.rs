//! Binomial probabilities summed in log space so that deep tails keep full
//! relative precision.

use statrs::function::gamma::ln_gamma;

fn ln_choose(n: u64, k: u64) -> f64 {
    if n <= 60 {
        // exact in u128, then one rounding
        let k = k.min(n - k);
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        (c as f64).ln()
    } else {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
    }
}

/// `log P[Bin(n, p) = k]`.
pub fn ln_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let term = |count: u64, ln_x: f64| if count == 0 { 0.0 } else { count as f64 * ln_x };
    let ln_p = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
    let ln_q = if p < 1.0 { (-p).ln_1p() } else { f64::NEG_INFINITY };
    ln_choose(n, k) + term(k, ln_p) + term(n - k, ln_q)
}

pub fn pmf(n: u64, k: u64, p: f64) -> f64 {
    ln_pmf(n, k, p).exp()
}

/// Whole mass function `P[Bin(n, p) = k]` for `k = 0..=n`.
pub fn pmf_vec(n: u64, p: f64) -> Vec<f64> {
    (0..=n).map(|k| pmf(n, k, p)).collect()
}

fn ln_sum(lo: u64, hi: u64, n: u64, p: f64) -> f64 {
    if lo > hi {
        return f64::NEG_INFINITY;
    }
    let terms: Vec<f64> = (lo..=hi).map(|k| ln_pmf(n, k, p)).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// `log P[Bin(n, p) ≤ k]`.
pub fn ln_cdf(n: u64, k: u64, p: f64) -> f64 {
    ln_sum(0, k.min(n), n, p)
}

/// `log P[Bin(n, p) > k]`.
pub fn ln_sf(n: u64, k: u64, p: f64) -> f64 {
    if k >= n {
        f64::NEG_INFINITY
    } else {
        ln_sum(k + 1, n, n, p)
    }
}

/// `P[Bin(n, p) ≤ k]`.
pub fn cdf(n: u64, k: u64, p: f64) -> f64 {
    ln_cdf(n, k, p).exp().min(1.0)
}

/// `P[Bin(n, p) > k]`.
pub fn sf(n: u64, k: u64, p: f64) -> f64 {
    ln_sf(n, k, p).exp().min(1.0)
}

//! Empirical tails: CCDFs, exponential and power-law slope fits, and
//! two-segment changepoint detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fits need at least this many points.
pub const MIN_FIT_POINTS: usize = 10;
/// Changepoint detection needs at least this many points.
pub const MIN_WAIST_POINTS: usize = 50;
const MIN_SEGMENT: usize = 5;
/// Censoring fraction above which estimates are refused.
pub const MAX_CENSORED_FRACTION: f64 = 0.05;
/// Relative SSE improvement below which a split is flagged as weak.
pub const LOW_CONFIDENCE_IMPROVEMENT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub value: f64,
    pub tail_prob: f64,
}

/// Empirical complementary CDF `P̂[X > x]` over the uncensored samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccdf {
    pub points: Vec<CcdfPoint>,
    sorted: Vec<f64>,
    pub n_samples: usize,
    pub censored: usize,
}

impl Ccdf {
    /// Wraps analytically known points; `n_samples` sets the default
    /// window floor.
    pub fn from_points(points: Vec<CcdfPoint>, n_samples: usize) -> Self {
        Self {
            points,
            sorted: Vec::new(),
            n_samples,
            censored: 0,
        }
    }

    pub fn censored_fraction(&self) -> f64 {
        let total = self.n_samples + self.censored;
        if total == 0 {
            0.0
        } else {
            self.censored as f64 / total as f64
        }
    }

    /// Step CCDF evaluated at integers from the smallest to the largest
    /// sample, every `stride` apart, keeping points with tail probability
    /// at least `min_prob`.
    pub fn lattice(&self, stride: u64, min_prob: f64) -> Vec<CcdfPoint> {
        let (Some(&first), Some(&last)) = (self.sorted.first(), self.sorted.last()) else {
            return Vec::new();
        };
        let n = self.sorted.len() as f64;
        let stride = stride.max(1) as f64;
        let mut out = Vec::new();
        let mut idx = 0;
        let mut x = first.floor();
        while x <= last {
            while idx < self.sorted.len() && self.sorted[idx] <= x {
                idx += 1;
            }
            let p = (self.sorted.len() - idx) as f64 / n;
            if p < min_prob {
                break;
            }
            out.push(CcdfPoint {
                value: x,
                tail_prob: p,
            });
            x += stride;
        }
        out
    }
}

/// `P̂[X > x]` at every distinct sample value. Censored samples are
/// excluded from the estimate and only counted.
pub fn empirical_ccdf(samples: &[f64], censored: usize) -> Result<Ccdf> {
    if samples.is_empty() {
        return Err(Error::param("samples", "need at least one uncensored sample"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("samples", "values must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut points = Vec::new();
    let mut i = 0;
    while i < n {
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
        points.push(CcdfPoint {
            value: v,
            tail_prob: (n - i) as f64 / n as f64,
        });
    }
    Ok(Ccdf {
        points,
        sorted,
        n_samples: n,
        censored,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "snake_case")]
pub enum FitWindow {
    /// Points whose tail probability lies in `[lo, hi]`.
    TailProb { lo: f64, hi: f64 },
    /// Points whose value lies in `[lo, hi]`.
    Value { lo: f64, hi: f64 },
}

impl FitWindow {
    /// Tail probabilities in `[10/n, 0.1]`.
    pub fn default_for(n_samples: usize) -> Self {
        FitWindow::TailProb {
            lo: 10.0 / n_samples.max(1) as f64,
            hi: 0.1,
        }
    }

    fn contains(&self, p: &CcdfPoint) -> bool {
        match *self {
            FitWindow::TailProb { lo, hi } => p.tail_prob >= lo && p.tail_prob <= hi,
            FitWindow::Value { lo, hi } => p.value >= lo && p.value <= hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailKind {
    Exponential,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub kind: TailKind,
    /// Decay rate or exponent as a positive magnitude.
    pub slope: f64,
    pub intercept: f64,
    pub window: [f64; 2],
    pub r_squared: f64,
    pub n_points: usize,
    pub waist: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`; `None` when `xs` is constant.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Option<Line> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let sse = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Some(Line {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

fn check_censoring(ccdf: &Ccdf) -> Result<()> {
    let f = ccdf.censored_fraction();
    if f > MAX_CENSORED_FRACTION {
        return Err(Error::FitRefused(format!(
            "{:.2}% of trials are censored, above the {}% limit",
            100.0 * f,
            100.0 * MAX_CENSORED_FRACTION
        )));
    }
    Ok(())
}

fn fit(ccdf: &Ccdf, window: FitWindow, kind: TailKind) -> Result<TailEstimate> {
    check_censoring(ccdf)?;
    let pts: Vec<&CcdfPoint> = ccdf
        .points
        .iter()
        .filter(|p| p.tail_prob > 0.0 && window.contains(p))
        .filter(|p| kind == TailKind::Exponential || p.value > 0.0)
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::FitRefused(format!(
            "{} points in the fit window, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let xs: Vec<f64> = pts
        .iter()
        .map(|p| match kind {
            TailKind::Exponential => p.value,
            TailKind::PowerLaw => p.value.ln(),
        })
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.tail_prob.ln()).collect();
    let line = least_squares(&xs, &ys)
        .ok_or_else(|| Error::FitRefused("fit window holds a single value".into()))?;
    Ok(TailEstimate {
        kind,
        slope: -line.slope,
        intercept: line.intercept,
        window: [pts[0].value, pts[pts.len() - 1].value],
        r_squared: line.r_squared,
        n_points: pts.len(),
        waist: None,
    })
}

/// Rate `a` of `P̂[X > t] ≈ C e^{−a t}`.
pub fn fit_exponential(ccdf: &Ccdf, window: FitWindow) -> Result<TailEstimate> {
    fit(ccdf, window, TailKind::Exponential)
}

/// Exponent `a` of `P̂[X > t] ≈ C t^{−a}`.
pub fn fit_power_law(ccdf: &Ccdf, window: FitWindow) -> Result<TailEstimate> {
    fit(ccdf, window, TailKind::PowerLaw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaistDomain {
    /// `log P` against `x`.
    LogLinear,
    /// `log P` against `log x`.
    LogLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waist {
    /// First value of the second segment.
    pub location: f64,
    pub index: usize,
    /// Slopes as positive decay magnitudes.
    pub pre_slope: f64,
    pub post_slope: f64,
    pub sse_single: f64,
    pub sse_split: f64,
    /// `1 − sse_split / sse_single`.
    pub improvement: f64,
    pub low_confidence: bool,
    pub n_points: usize,
}

/// Prefix sums for O(1) least-squares residuals over index ranges.
struct Prefix {
    x: Vec<f64>,
    y: Vec<f64>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
}

impl Prefix {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        let mut p = Prefix {
            x: vec![0.0; n + 1],
            y: vec![0.0; n + 1],
            xx: vec![0.0; n + 1],
            xy: vec![0.0; n + 1],
            yy: vec![0.0; n + 1],
        };
        for i in 0..n {
            let (x, y) = (xs[i], ys[i]);
            p.x[i + 1] = p.x[i] + x;
            p.y[i + 1] = p.y[i] + y;
            p.xx[i + 1] = p.xx[i] + x * x;
            p.xy[i + 1] = p.xy[i] + x * y;
            p.yy[i + 1] = p.yy[i] + y * y;
        }
        p
    }

    /// `(sse, slope)` of the least-squares line through points `a..b`.
    fn segment(&self, a: usize, b: usize) -> (f64, f64) {
        let n = (b - a) as f64;
        let sx = self.x[b] - self.x[a];
        let sy = self.y[b] - self.y[a];
        let sxx = self.xx[b] - self.xx[a] - sx * sx / n;
        let sxy = self.xy[b] - self.xy[a] - sx * sy / n;
        let syy = self.yy[b] - self.yy[a] - sy * sy / n;
        if sxx <= 0.0 {
            return (syy.max(0.0), 0.0);
        }
        let slope = sxy / sxx;
        ((syy - slope * sxy).max(0.0), slope)
    }
}

/// Best two-segment least-squares fit of `log P` over all split points.
pub fn detect_waist(points: &[CcdfPoint], domain: WaistDomain) -> Result<Waist> {
    let pts: Vec<&CcdfPoint> = points
        .iter()
        .filter(|p| p.tail_prob > 0.0)
        .filter(|p| domain == WaistDomain::LogLinear || p.value > 0.0)
        .collect();
    if pts.len() < MIN_WAIST_POINTS {
        return Err(Error::FitRefused(format!(
            "{} points for changepoint detection, need {MIN_WAIST_POINTS}",
            pts.len()
        )));
    }
    let raw: Vec<f64> = pts
        .iter()
        .map(|p| match domain {
            WaistDomain::LogLinear => p.value,
            WaistDomain::LogLog => p.value.ln(),
        })
        .collect();
    // centre x so the prefix sums stay well conditioned
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    let xs: Vec<f64> = raw.iter().map(|x| x - mean).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.tail_prob.ln()).collect();
    let pre = Prefix::new(&xs, &ys);
    let n = xs.len();
    let (sse_single, _) = pre.segment(0, n);
    let mut best = (f64::INFINITY, MIN_SEGMENT);
    for k in MIN_SEGMENT..=n - MIN_SEGMENT {
        let sse = pre.segment(0, k).0 + pre.segment(k, n).0;
        if sse < best.0 {
            best = (sse, k);
        }
    }
    let (sse_split, k) = best;
    let improvement = if sse_single > 0.0 {
        1.0 - sse_split / sse_single
    } else {
        0.0
    };
    Ok(Waist {
        location: pts[k].value,
        index: k,
        pre_slope: -pre.segment(0, k).1,
        post_slope: -pre.segment(k, n).1,
        sse_single,
        sse_split,
        improvement,
        low_confidence: improvement < LOW_CONFIDENCE_IMPROVEMENT,
        n_points: n,
    })
}

//! Dense square matrices, Kronecker powers and Perron roots of nonnegative
//! matrices.
//!
//! Kronecker products follow the usual block convention
//! `(A ⊗ B)[i·p + j, k·q + l] = A[i, k] · B[j, l]`, so in a Kronecker power
//! the first factor owns the most significant digit of the joint index.

use crate::error::{Error, Result};

/// Largest Kronecker power dimension materialised or iterated on.
pub const DEFAULT_KRONECKER_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::param("matrix", "empty matrix"));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::param(
                    "matrix",
                    format!("row {i} has {} entries, expected {dim}", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        out
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).iter().sum()).collect()
    }
}

pub fn kronecker(a: &SquareMatrix, b: &SquareMatrix) -> SquareMatrix {
    let (p, q) = (a.dim, b.dim);
    let mut out = SquareMatrix::zeros(p * q);
    for i in 0..p {
        for k in 0..p {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            for j in 0..q {
                for l in 0..q {
                    out.set(i * q + j, k * q + l, aik * b.get(j, l));
                }
            }
        }
    }
    out
}

/// Dimension of the `n`-fold Kronecker power of a `dim × dim` matrix, or
/// `None` when it overflows `cap`.
pub fn kronecker_dim(dim: usize, n: u32, cap: usize) -> Option<usize> {
    let mut d: usize = 1;
    for _ in 0..n {
        d = d.checked_mul(dim)?;
        if d > cap {
            return None;
        }
    }
    Some(d)
}

/// `M^{⊗n}` materialised densely.
pub fn kronecker_power(m: &SquareMatrix, n: u32, cap: usize) -> Result<SquareMatrix> {
    if n == 0 {
        return Err(Error::param("n", "Kronecker power needs n >= 1"));
    }
    if kronecker_dim(m.dim, n, cap).is_none() {
        return Err(Error::ResourceLimit(format!(
            "{n}-fold Kronecker power of a {d}x{d} matrix exceeds {cap} rows",
            d = m.dim
        )));
    }
    let mut out = m.clone();
    for _ in 1..n {
        out = kronecker(&out, m);
    }
    Ok(out)
}

/// Matrix-free `M^{⊗n}` acting on vectors of length `dim^n`, applied one
/// tensor mode at a time: `O(n · dim^{n+1})` per product instead of
/// `O(dim^{2n})`.
#[derive(Debug, Clone)]
pub struct KroneckerPower {
    factor: SquareMatrix,
    n: u32,
    dim: usize,
}

impl KroneckerPower {
    pub fn new(factor: SquareMatrix, n: u32, cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("n", "Kronecker power needs n >= 1"));
        }
        let dim = kronecker_dim(factor.dim, n, cap).ok_or_else(|| {
            Error::ResourceLimit(format!(
                "{n}-fold Kronecker power of a {d}x{d} matrix exceeds {cap} rows",
                d = factor.dim
            ))
        })?;
        Ok(Self { factor, n, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `y = M^{⊗n} x`; `scratch` must have length `dim`.
    pub fn apply(&self, x: &[f64], y: &mut [f64], scratch: &mut [f64]) {
        let d = self.factor.dim;
        y.copy_from_slice(x);
        let mut stride = self.dim / d;
        for _ in 0..self.n {
            scratch.copy_from_slice(y);
            let block = stride * d;
            for base in (0..self.dim).step_by(block) {
                for inner in 0..stride {
                    for i in 0..d {
                        let mut acc = 0.0;
                        for k in 0..d {
                            acc += self.factor.get(i, k) * scratch[base + k * stride + inner];
                        }
                        y[base + i * stride + inner] = acc;
                    }
                }
            }
            stride /= d.max(1);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PerronOptions {
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

/// Perron root of a nonnegative primitive operator by power iteration.
///
/// Stops once the Collatz–Wielandt bounds `min (Mx)_i/x_i ≤ ρ ≤ max (Mx)_i/x_i`
/// agree to `rel_tol`; both bounds are rigorous for a positive iterate.
pub fn perron_root<F>(dim: usize, mut apply: F, opts: PerronOptions) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut x = vec![1.0 / dim as f64; dim];
    let mut y = vec![0.0; dim];
    let mut last = (f64::NAN, f64::NAN);
    for _ in 0..opts.max_iter {
        apply(&x, &mut y);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut all_positive = true;
        for (xi, yi) in x.iter().zip(&y) {
            if *xi > 0.0 {
                let ratio = yi / xi;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            } else {
                all_positive = false;
            }
        }
        let norm: f64 = y.iter().sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numeric(format!(
                "power iteration produced a degenerate iterate (norm {norm})"
            )));
        }
        if all_positive && hi - lo <= opts.rel_tol * hi {
            return Ok(0.5 * (hi + lo));
        }
        last = (lo, hi);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / norm;
        }
    }
    Err(Error::Numeric(format!(
        "power iteration did not converge in {} iterations (bounds {:.6e}..{:.6e})",
        opts.max_iter, last.0, last.1
    )))
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: SquareMatrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.dim;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap();
        if a.get(pivot, col).abs() < 1e-300 {
            return Err(Error::Numeric("singular linear system".into()));
        }
        if pivot != col {
            for j in 0..n {
                let t = a.get(col, j);
                a.set(col, j, a.get(pivot, j));
                a.set(pivot, j, t);
            }
            b.swap(col, pivot);
        }
        let p = a.get(col, col);
        for i in col + 1..n {
            let f = a.get(i, col) / p;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a.set(i, j, a.get(i, j) - f * a.get(col, j));
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a.get(i, j) * x[j]).sum();
        x[i] = (b[i] - s) / a.get(i, i);
    }
    Ok(x)
}

//! DFT submatrix algebra, index sets and the shared system dimensions.
//!
//! Forward DFT convention: `F[r][c] = exp(-j 2 pi r c / M)`, unnormalized.
//! The inverse uses the conjugate kernel and a `1/M` factor.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Global dimensions shared by every module.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of subcarriers (power of two).
    pub m: usize,
    /// Channel length in samples (power of two, at most M/2).
    pub lh: usize,
    /// Prototype overlapping factor, 1..=5.
    pub k: usize,
    /// Training energy budget.
    pub energy: f64,
}

impl SystemConfig {
    pub fn new(m: usize, lh: usize, k: usize, energy: f64) -> Result<Self> {
        let cfg = Self { m, lh, k, energy };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_power_of_two() || self.m < 4 {
            return Err(Error::Config(format!("M = {} must be a power of two >= 4", self.m)));
        }
        if !self.lh.is_power_of_two() || self.lh < 2 {
            return Err(Error::Config(format!("L_h = {} must be a power of two >= 2", self.lh)));
        }
        if self.m % self.lh != 0 || self.m / self.lh < 2 {
            return Err(Error::Config(format!(
                "need M/L_h >= 2 integer, got M = {}, L_h = {}",
                self.m, self.lh
            )));
        }
        if !(1..=5).contains(&self.k) {
            return Err(Error::Config(format!("K = {} outside 1..=5", self.k)));
        }
        if !(self.energy.is_finite() && self.energy > 0.0) {
            return Err(Error::Config(format!("energy budget {} must be positive", self.energy)));
        }
        Ok(())
    }

    /// CP length.
    pub fn nu(&self) -> usize {
        self.lh - 1
    }

    /// Prototype length K*M.
    pub fn lg(&self) -> usize {
        self.k * self.m
    }

    pub fn with_energy(mut self, energy: f64) -> Self {
        self.energy = energy;
        self
    }
}

/// Strictly increasing subcarrier (or column) indices below `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet {
    m: usize,
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(m: usize, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::Dimension(format!("index {bad} out of range for M = {m}")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dimension("indices must be strictly increasing".into()));
        }
        Ok(Self { m, indices })
    }

    /// `{start, start+1, ..., start+len-1}`.
    pub fn range(m: usize, start: usize, len: usize) -> Result<Self> {
        Self::new(m, (start..start + len).collect())
    }

    pub fn full(m: usize) -> Self {
        Self { m, indices: (0..m).collect() }
    }

    pub fn modulus(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Complement within `0..m`.
    pub fn complement(&self) -> Self {
        let indices = (0..self.m).filter(|i| !self.contains(*i)).collect();
        Self { m: self.m, indices }
    }

    /// If the set is `{i0 + k m/n}` return `(n, i0)`.
    pub fn equispaced_params(&self) -> Option<(usize, usize)> {
        let n = self.indices.len();
        if n == 0 || self.m % n != 0 {
            return None;
        }
        let step = self.m / n;
        let i0 = self.indices[0];
        if i0 >= step {
            return None;
        }
        self.indices
            .iter()
            .enumerate()
            .all(|(k, &i)| i == i0 + k * step)
            .then_some((n, i0))
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.indices)
    }
}

/// `exp(-j 2 pi e / m)` with the exponent reduced modulo `m` first.
pub fn twiddle(e: i64, m: usize) -> Complex64 {
    let r = e.rem_euclid(m as i64) as f64;
    Complex64::from_polar(1.0, -2.0 * PI * r / m as f64)
}

/// Rows/columns of the M x M DFT matrix.
pub fn dft_submatrix(m: usize, rows: &IndexSet, cols: &IndexSet) -> Result<CMatrix> {
    for set in [rows, cols] {
        if let Some(&bad) = set.as_slice().iter().find(|&&i| i >= m) {
            return Err(Error::Dimension(format!("index {bad} out of range for M = {m}")));
        }
    }
    Ok(CMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let e = (rows.as_slice()[r] * cols.as_slice()[c]) % m;
        twiddle(e as i64, m)
    }))
}

/// `{i0 + k M/N : k = 0..N-1}`.
pub fn equispaced_set(m: usize, n: usize, i0: usize) -> Result<IndexSet> {
    if n == 0 || n > m || m % n != 0 {
        return Err(Error::Config(format!("N = {n} does not divide M = {m}")));
    }
    let step = m / n;
    if i0 >= step {
        return Err(Error::Config(format!("i0 = {i0} must be below M/N = {step}")));
    }
    IndexSet::new(m, (0..n).map(|k| i0 + k * step).collect())
}

/// `F_{M x nu} F_{M x nu}^H` where `F_{M x nu}` holds the last `nu` DFT columns.
pub fn cp_gram(m: usize, nu: usize) -> Result<CMatrix> {
    if nu == 0 || nu >= m {
        return Err(Error::Dimension(format!("need 1 <= nu < M, got nu = {nu}, M = {m}")));
    }
    let rows = IndexSet::full(m);
    let cols = IndexSet::range(m, m - nu, nu)?;
    let f = dft_submatrix(m, &rows, &cols)?;
    Ok(&f * f.adjoint())
}

/// `F_{M x L}`: first `l` columns of the DFT matrix.
pub fn dft_first_columns(m: usize, l: usize) -> Result<CMatrix> {
    dft_submatrix(m, &IndexSet::full(m), &IndexSet::range(m, 0, l)?)
}

/// Cached forward/inverse FFT plans of one length.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place `X[k] = sum_l x[l] exp(-j 2 pi k l / n)`.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
    }

    /// In-place `x[l] = sum_k X[k] exp(+j 2 pi k l / n)` (no 1/n).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
    }
}

pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

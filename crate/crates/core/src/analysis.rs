//! Closed-form predictions and checks: training energies, TPR, MSE
//! expressions, error floors, AFB noise covariance, PAPR and the
//! optimality verification suite.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::channel;
use crate::error::{Error, Result};
use crate::estimation::{divisors, DivisorMode, Interpolator, Method, Projector};
use crate::oqam::{self, PhaseRule, PrototypeFilter};
use crate::preamble::{
    make_full_equal, make_full_equipower_qam, make_sparse_equal, CellRole, EnergyMode, Layout, Modems, Preamble,
    Scenario, Scheme,
};
use crate::rng;
use crate::spectral::{cp_gram, dft_first_columns, dft_submatrix, equispaced_set, CMatrix, Dft, IndexSet, SystemConfig};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn sum_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Exact training energy at the transmit antenna. Data cells are excluded;
/// for CP-OFDM the CP energy of the whole vector (data included) counts as
/// training overhead.
pub fn antenna_energy(p: &Preamble, modems: &Modems) -> Result<f64> {
    match p.scheme {
        Scheme::Qam => {
            let train = sum_sq(p.training_only().column(0));
            Ok(train + modems.ofdm.modulate(p.column(0))?.cp_energy())
        }
        Scheme::Oqam => Ok(sum_sq(&modems.bank.sfb(&p.training_only().grid())?)),
    }
}

/// Training energy averaged over the data symbols (equal to
/// [`antenna_energy`] for preambles without data).
pub fn expected_antenna_energy(p: &Preamble, modems: &Modems) -> Result<f64> {
    let cfg = &modems.cfg;
    match p.scheme {
        Scheme::Qam => {
            let train = p.training_only();
            let base = sum_sq(train.column(0)) + modems.ofdm.modulate(train.column(0))?.cp_energy();
            // each data tone leaks |x|^2 nu / M into the CP; cross terms average out
            let data: f64 = p.data_cells().iter().map(|&(m, n)| p.symbol(m, n).norm_sqr()).sum();
            Ok(base + data * cfg.nu() as f64 / cfg.m as f64)
        }
        Scheme::Oqam => {
            let helps = p.help_cells();
            if helps.is_empty() {
                return antenna_energy(p, modems);
            }
            // pilots alone, plus E[h^2] per help pilot (help pilots are zero-mean
            // and orthogonal in the real field to the pilots they serve)
            let pilots_only = p.training_only();
            let mut grid = pilots_only.grid();
            for &(m, n) in &helps {
                grid.set(m, n, 0.0);
            }
            let base = sum_sq(&modems.bank.sfb(&grid)?);
            let full = p.grid();
            let table = modems.bank.table();
            let mut extra = 0.0;
            for &(hm, hn) in &helps {
                let pilot = (hm, 0);
                let wh = table.inner_phased(full.rule, hm, hn, pilot.0, pilot.1);
                let mut var = 0.0;
                for (m, n) in full.neighbours(pilot.0, pilot.1) {
                    if (m, n) == (hm, hn) || p.role(m, n) != CellRole::Data {
                        continue;
                    }
                    let w = table.inner_phased(full.rule, m, n, pilot.0, pilot.1);
                    let a = full.get(m, n);
                    var += a * a * ((w * wh.conj()).re / wh.norm_sqr()).powi(2);
                }
                extra += var;
            }
            Ok(base + extra)
        }
    }
}

/// Training power ratio between two preamble structures.
#[derive(Debug, Clone, PartialEq)]
pub struct TprReport {
    pub label1: String,
    pub label2: String,
    pub energy1: f64,
    pub energy2: f64,
    /// Observation windows (samples).
    pub r1: usize,
    pub r2: usize,
    /// `(E1/R1) / (E2/R2)`.
    pub tpr: f64,
}

impl TprReport {
    /// Amplitude factor that brings structure 2 to the per-sample power of 1.
    pub fn scale(&self) -> f64 {
        self.tpr.sqrt()
    }

    pub fn db(&self) -> f64 {
        10.0 * self.tpr.log10()
    }
}

pub fn tpr(p1: &Preamble, p2: &Preamble, modems: &Modems) -> Result<TprReport> {
    let e1 = expected_antenna_energy(p1, modems)?;
    let e2 = expected_antenna_energy(p2, modems)?;
    tpr_from(p1, p2, e1, e2, p1.window(&modems.cfg), p2.window(&modems.cfg))
}

/// TPR with explicit energies and windows (used by the truncated setup).
pub fn tpr_from(p1: &Preamble, p2: &Preamble, e1: f64, e2: f64, r1: usize, r2: usize) -> Result<TprReport> {
    if !(e1 > 0.0 && e2 > 0.0) || r1 == 0 || r2 == 0 {
        return Err(Error::Parameter("TPR needs positive energies and windows".into()));
    }
    Ok(TprReport {
        label1: format!("{}-{}", p1.scheme, p1.label()),
        label2: format!("{}-{}", p2.scheme, p2.label()),
        energy1: e1,
        energy2: e2,
        r1,
        r2,
        tpr: (e1 / r1 as f64) / (e2 / r2 as f64),
    })
}

/// Closed-form MSE (total over the M tones) with its exact noise-trace
/// counterpart.
#[derive(Debug, Clone, PartialEq)]
pub struct MsePrediction {
    /// Closed-form expression.
    pub mse: f64,
    /// Noise MSE evaluated exactly through the linear receiver.
    pub exact: f64,
    pub floor: f64,
    pub formula: &'static str,
}

/// Autocorrelation `sum_{l in W} g(l)^2 exp(j 2 pi dm (l - c) / M)` of the
/// windowed prototype, any integer `dm`.
#[derive(Debug, Clone)]
pub struct WindowKernel {
    m: usize,
    lg: usize,
    vals: Vec<Complex64>,
}

impl WindowKernel {
    pub fn new(proto: &PrototypeFilter, window: Range<usize>) -> Self {
        let m = proto.m();
        let g = proto.taps();
        let lg = g.len();
        let mut w = vec![ZERO; m];
        for l in window.start.min(lg)..window.end.min(lg) {
            w[l % m] += g[l] * g[l];
        }
        Dft::new(m).inverse(&mut w);
        let c = (lg as f64 - 1.0) / 2.0;
        let vals = w
            .into_iter()
            .enumerate()
            .map(|(dm, z)| z * Complex64::from_polar(1.0, -2.0 * PI * dm as f64 * c / m as f64))
            .collect();
        Self { m, lg, vals }
    }

    pub fn get(&self, dm: i64) -> Complex64 {
        let mm = self.m as i64;
        let wraps = dm.div_euclid(mm);
        let v = self.vals[dm.rem_euclid(mm) as usize];
        if self.lg % 2 == 0 && wraps % 2 != 0 {
            -v
        } else {
            v
        }
    }
}

/// Normalized noise covariance `B` at the AFB outputs of column 0 on the
/// tones `points` (`E[eta eta^H] = sigma^2 B`), pulse restricted to `window`.
pub fn afb_noise_cov_on(proto: &PrototypeFilter, rule: PhaseRule, points: &IndexSet, window: Range<usize>) -> CMatrix {
    let k = WindowKernel::new(proto, window);
    let pts = points.as_slice();
    CMatrix::from_fn(pts.len(), pts.len(), |i, j| {
        let (pi, pj) = (pts[i], pts[j]);
        // E[eta_i eta_j^*] = sum_l conj(g_i(l)) g_j(l)
        k.get(pj as i64 - pi as i64) * rule.phasor(pj, 0) * rule.phasor(pi, 0).conj()
    })
}

/// `sigma^2 B` over all M tones, equal phases, full pulse.
pub fn afb_noise_cov(g: &PrototypeFilter, cfg: &SystemConfig, sigma2: f64) -> Result<CMatrix> {
    if g.m() != cfg.m {
        return Err(Error::Dimension("prototype and config disagree on M".into()));
    }
    Ok(afb_noise_cov_on(g, PhaseRule::Equal, &IndexSet::full(cfg.m), 0..g.len()) * Complex64::new(sigma2, 0.0))
}

/// Noise covariance at the pilot observations of `p` (CP-OFDM: identity).
pub fn pilot_noise_cov(p: &Preamble, modems: &Modems, window: Option<Range<usize>>) -> CMatrix {
    match p.scheme {
        Scheme::Qam => CMatrix::identity(p.pilots.len(), p.pilots.len()),
        Scheme::Oqam => {
            let proto = modems.bank.prototype();
            afb_noise_cov_on(proto, p.rule, &p.pilots, window.unwrap_or(0..proto.len()))
        }
    }
}

/// `E||H_hat - H||^2 / sigma^2` of a linear estimator fed with
/// `y / d` on `pilots`, noise covariance `cov`.
pub fn noise_mse(method: Method, pilots: &IndexSet, d: &[Complex64], cov: &CMatrix, cfg: &SystemConfig) -> Result<f64> {
    let n = pilots.len();
    if d.len() != n || cov.nrows() != n || cov.ncols() != n {
        return Err(Error::Dimension("divisors/covariance do not match the pilot set".into()));
    }
    let dinv: Vec<Complex64> = d.iter().map(|z| 1.0 / z).collect();
    let scaled = CMatrix::from_fn(n, n, |i, j| dinv[i] * cov[(i, j)] * dinv[j].conj());
    let m = cfg.m as f64;
    let t = match method {
        Method::PerTone => {
            return Ok((0..n).map(|i| scaled[(i, i)].re).sum());
        }
        Method::Interpolate => match pilots.equispaced_params() {
            Some(_) => {
                dft_submatrix(cfg.m, pilots, &IndexSet::range(cfg.m, 0, cfg.lh)?)?.adjoint()
                    / Complex64::new(n as f64, 0.0)
            }
            None => {
                let f = dft_submatrix(cfg.m, pilots, &IndexSet::range(cfg.m, 0, cfg.lh)?)?;
                let gram = (f.adjoint() * &f)
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("pilot Gram matrix is singular".into()))?;
                gram * f.adjoint()
            }
        },
        Method::Project => {
            if n != cfg.m {
                return Err(Error::Usage("projection needs a full preamble".into()));
            }
            dft_first_columns(cfg.m, cfg.lh)?.adjoint() / Complex64::new(m, 0.0)
        }
    };
    let tc = &t * &scaled;
    let tr: f64 = (0..t.nrows()).map(|r| (0..n).map(|c| (tc[(r, c)] * t[(r, c)].conj()).re).sum::<f64>()).sum();
    Ok(m * tr)
}

fn pilot_energy(p: &Preamble) -> f64 {
    let v = p.pilot_values();
    sum_sq(&v) / v.len() as f64
}

/// Closed-form MSE of `p` under `method`, plus the exact noise trace.
pub fn closed_form_mse(p: &Preamble, modems: &Modems, sigma2: f64, method: Method, mode: DivisorMode) -> Result<MsePrediction> {
    let cfg = &modems.cfg;
    let (m, lh) = (cfg.m as f64, cfg.lh as f64);
    let ex = pilot_energy(p);
    let n = p.pilots.len() as f64;
    let beta = modems.beta();
    let (mse, formula) = match (p.scheme, p.layout, method) {
        (_, Layout::Sparse { .. }, Method::Interpolate) => (m * sigma2 * lh / (n * ex), "M sigma^2 L_h / (N E_x)"),
        (_, Layout::SparseData { .. }, Method::Interpolate) => (m * sigma2 / ex, "M sigma^2 / E_x"),
        (Scheme::Qam, Layout::Full, Method::PerTone) => {
            let inv: f64 = p.pilot_values().iter().map(|z| sigma2 / z.norm_sqr()).sum();
            (inv, "sum sigma^2 / |x_m|^2")
        }
        (Scheme::Qam, Layout::Full, Method::Project) => {
            let inv: f64 = p.pilot_values().iter().map(|z| sigma2 / z.norm_sqr()).sum();
            (lh / m * inv, "(L_h / M) sum sigma^2 / |x_m|^2")
        }
        (Scheme::Oqam, Layout::Full, Method::PerTone) => {
            (m * sigma2 / (ex * (1.0 + 2.0 * beta).powi(2)), "M sigma^2 / (E_x (1 + 2 beta)^2)")
        }
        (Scheme::Oqam, Layout::Full, Method::Project) => {
            (lh * sigma2 / (ex * (1.0 + 2.0 * beta)), "L_h sigma^2 / (E_x (1 + 2 beta))")
        }
        _ => {
            return Err(Error::Usage(format!(
                "no closed form for {} {} with {method}",
                p.scheme,
                p.label()
            )))
        }
    };
    let d = divisors(p, modems, mode)?;
    let cov = pilot_noise_cov(p, modems, None);
    let exact = sigma2 * noise_mse(method, &p.pilots, &d, &cov, cfg)?;
    Ok(MsePrediction { mse, exact, floor: 0.0, formula })
}

/// Noise-free estimate under the flat-per-subcarrier model, all
/// interference orders over the whole grid.
pub fn flat_estimate(
    p: &Preamble,
    modems: &Modems,
    cfr: &[Complex64],
    method: Method,
    mode: DivisorMode,
) -> Result<Vec<Complex64>> {
    let cfg = &modems.cfg;
    if cfr.len() != cfg.m {
        return Err(Error::Dimension(format!("CFR has {} tones, M = {}", cfr.len(), cfg.m)));
    }
    let d = divisors(p, modems, mode)?;
    let y: Vec<Complex64> = match p.scheme {
        Scheme::Qam => p.pilots.as_slice().iter().map(|&k| cfr[k] * p.symbol(k, 0)).collect(),
        Scheme::Oqam => {
            let pts: Vec<(usize, usize)> = p.pilots.as_slice().iter().map(|&k| (k, 0)).collect();
            oqam::flat_response(&p.grid(), modems.bank.table(), cfr, &pts)
        }
    };
    let raw: Vec<Complex64> = y.iter().zip(&d).map(|(y, d)| y / d).collect();
    apply(method, &raw, &p.pilots, cfg)
}

/// Run an estimator on per-pilot ratios.
pub fn apply(method: Method, raw: &[Complex64], pilots: &IndexSet, cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    match method {
        Method::PerTone => {
            if raw.len() != cfg.m {
                return Err(Error::Usage("per-tone estimates need a full preamble".into()));
            }
            Ok(raw.to_vec())
        }
        Method::Interpolate => Ok(Interpolator::new(cfg, pilots)?.estimate(raw)?.cfr),
        Method::Project => Ok(Projector::new(cfg).project(raw)?.cfr),
    }
}

/// Pulse cross-correlations under a sample delay:
/// `Q_{l,n}(dm) = sum_{k in rx} g_tx(k - l - n M/2) g(k) exp(j 2 pi dm (k - c) / M)`,
/// with `g_tx` the pulse restricted to `tx` of its own support.
#[derive(Debug, Clone)]
pub struct DispersiveKernels {
    m: usize,
    lg: usize,
    cols: usize,
    lh: usize,
    q: Vec<Vec<Complex64>>,
}

impl DispersiveKernels {
    pub fn new(proto: &PrototypeFilter, lh: usize, cols: usize, tx: Range<usize>, rx: Range<usize>) -> Self {
        let m = proto.m();
        let g = proto.taps();
        let lg = g.len();
        let c = (lg as f64 - 1.0) / 2.0;
        let dft = Dft::new(m);
        let mut q = Vec::with_capacity(lh * cols);
        for n in 0..cols {
            for l in 0..lh {
                let shift = l + n * m / 2;
                let mut w = vec![ZERO; m];
                for k in rx.start.min(lg)..rx.end.min(lg) {
                    if k < shift || !tx.contains(&(k - shift)) || k - shift >= lg {
                        continue;
                    }
                    w[k % m] += g[k - shift] * g[k];
                }
                dft.inverse(&mut w);
                q.push(
                    w.into_iter()
                        .enumerate()
                        .map(|(dm, z)| z * Complex64::from_polar(1.0, -2.0 * PI * dm as f64 * c / m as f64))
                        .collect(),
                );
            }
        }
        Self { m, lg, cols, lh, q }
    }

    pub fn get(&self, l: usize, n: usize, dm: i64) -> Complex64 {
        let mm = self.m as i64;
        let wraps = dm.div_euclid(mm);
        let v = self.q[n * self.lh + l][dm.rem_euclid(mm) as usize];
        if self.lg % 2 == 0 && wraps % 2 != 0 {
            -v
        } else {
            v
        }
    }

    /// Noise-free AFB outputs of column 0 at `points` for the OQAM preamble
    /// `p` through the sample-spaced channel `h`.
    pub fn response(&self, p: &Preamble, h: &[Complex64], points: &[usize]) -> Result<Vec<Complex64>> {
        if p.m() != self.m || p.cols() > self.cols || h.len() > self.lh {
            return Err(Error::Dimension("kernels do not cover this preamble/channel".into()));
        }
        let m = self.m;
        let cells: Vec<(usize, usize, Complex64)> = (0..p.cols())
            .flat_map(|n| (0..m).map(move |k| (k, n)))
            .map(|(k, n)| (k, n, p.symbol(k, n)))
            .filter(|c| c.2 != ZERO)
            .collect();
        let ramps: Vec<Complex64> =
            (0..m).map(|i| Complex64::from_polar(1.0, -2.0 * PI * i as f64 / m as f64)).collect();
        Ok(points
            .iter()
            .map(|&pt| {
                let back = p.rule.phasor(pt, 0).conj();
                let mut y = ZERO;
                for (l, &hl) in h.iter().enumerate() {
                    if hl == ZERO {
                        continue;
                    }
                    let mut acc = ZERO;
                    for &(k, n, a) in &cells {
                        acc += a * ramps[(k * l) % m] * self.get(l, n, k as i64 - pt as i64);
                    }
                    y += hl * acc;
                }
                y * back
            })
            .collect())
    }
}

/// Error floor `||H_hat - H||^2` for one channel (zero for CP-OFDM), from
/// the exact interference sums over the whole grid and every channel tap.
pub fn error_floor(
    p: &Preamble,
    modems: &Modems,
    h: &channel::ChannelRealization,
    method: Method,
    mode: DivisorMode,
) -> Result<MsePrediction> {
    let lg = modems.cfg.lg();
    let kernels = DispersiveKernels::new(modems.bank.prototype(), h.h.len(), p.cols(), 0..lg, 0..lg);
    floor_with(p, modems, &kernels, h, method, mode, 1.0)
}

/// [`error_floor`] with precomputed kernels and a divisor gain.
pub fn floor_with(
    p: &Preamble,
    modems: &Modems,
    kernels: &DispersiveKernels,
    h: &channel::ChannelRealization,
    method: Method,
    mode: DivisorMode,
    gain: f64,
) -> Result<MsePrediction> {
    let cfr = channel::cfr_from_cir(&h.h, modems.cfg.m)?;
    let (floor, formula) = match p.scheme {
        Scheme::Qam => (0.0, "CP-OFDM: no floor"),
        Scheme::Oqam => {
            let y = kernels.response(p, &h.h, p.pilots.as_slice())?;
            let d = divisors(p, modems, mode)?;
            let raw: Vec<Complex64> = y.iter().zip(&d).map(|(y, d)| y / (d * gain)).collect();
            let est = apply(method, &raw, &p.pilots, &modems.cfg)?;
            (est.iter().zip(&cfr).map(|(a, b)| (a - b).norm_sqr()).sum(), "exact residual interference")
        }
    };
    Ok(MsePrediction { mse: floor, exact: floor, floor, formula })
}

/// Floor under the flat-per-subcarrier model `y_m = H_m a_m + j H^T u_m`.
pub fn flat_floor(
    p: &Preamble,
    modems: &Modems,
    h: &channel::ChannelRealization,
    method: Method,
    mode: DivisorMode,
) -> Result<MsePrediction> {
    let cfr = channel::cfr_from_cir(&h.h, modems.cfg.m)?;
    let (floor, formula) = match p.scheme {
        Scheme::Qam => (0.0, "CP-OFDM: no floor"),
        Scheme::Oqam => {
            let est = flat_estimate(p, modems, &cfr, method, mode)?;
            (est.iter().zip(&cfr).map(|(a, b)| (a - b).norm_sqr()).sum(), "flat-model residual interference")
        }
    };
    Ok(MsePrediction { mse: floor, exact: floor, floor, formula })
}

/// `(M / L_h) beta^2 sum_{m in I} |H_m|^2`.
pub fn sd1a_floor(cfr: &[Complex64], pilots: &IndexSet, beta: f64, lh: usize) -> f64 {
    let m = cfr.len() as f64;
    m / lh as f64 * beta * beta * pilots.as_slice().iter().map(|&k| cfr[k].norm_sqr()).sum::<f64>()
}

/// `max |s|^2 / mean |s|^2`.
pub fn papr(s: &[Complex64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Parameter("PAPR of an empty signal".into()));
    }
    let mean = sum_sq(s) / s.len() as f64;
    if mean == 0.0 {
        return Err(Error::Parameter("PAPR of an all-zero signal".into()));
    }
    Ok(s.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max) / mean)
}

/// Closed-form gaps in dB.
pub mod gaps {
    /// CP-OFDM full vs sparse, no projection.
    pub fn qam_full_sparse(m: usize, lh: usize) -> f64 {
        10.0 * (m as f64 / lh as f64).log10()
    }

    /// OFDM/OQAM full (pseudo-pilot divisor) vs sparse.
    pub fn oqam_full_sparse(m: usize, lh: usize, beta: f64) -> f64 {
        10.0 * (m as f64 / (lh as f64 * (1.0 + 2.0 * beta))).log10()
    }

    /// P pilots vs L_h pilots of the same modulus.
    pub fn pilots_ratio(p: usize, lh: usize) -> f64 {
        10.0 * (p as f64 / lh as f64).log10()
    }

    /// Expected CP-OFDM sparse-data training energy over the sparse one.
    pub fn qam_sparse_data_ratio(m: usize, lh: usize) -> f64 {
        let (m, lh) = (m as f64, lh as f64);
        1.0 + (m - lh) * (lh - 1.0) / (m * lh)
    }

    pub fn qam_sparse_data(m: usize, lh: usize) -> f64 {
        10.0 * qam_sparse_data_ratio(m, lh).log10()
    }

    /// Sparse OFDM/OQAM vs sparse CP-OFDM at the same pilot modulus.
    pub fn cross_system(m: usize, lh: usize, k: usize) -> f64 {
        10.0 * ((k * m) as f64 / (m + lh - 1) as f64).log10()
    }

    /// Sparse-data (scenario 2) over sparse OFDM/OQAM training power ratio
    /// with data-to-pilot power ratio `rho`.
    pub fn oqam_sd2_tpr(lg: usize, m: usize, zeta: f64, rho: f64) -> f64 {
        lg as f64 * (1.0 + rho * zeta) / (lg as f64 + m as f64 / 2.0)
    }
}

/// von Neumann trace inequality terms: `|tr(A^H B)|` and `sum_i s_i(A) s_i(B)`.
pub fn von_neumann(a: &CMatrix, b: &CMatrix) -> Result<(f64, f64)> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension("trace inequality needs equal shapes".into()));
    }
    let lhs = (a.adjoint() * b).trace().norm();
    let mut sa: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    let mut sb: Vec<f64> = b.clone().svd(false, false).singular_values.iter().copied().collect();
    sa.sort_by(|x, y| y.total_cmp(x));
    sb.sort_by(|x, y| y.total_cmp(x));
    Ok((lhs, sa.iter().zip(&sb).map(|(x, y)| x * y).sum()))
}

/// Time-domain MSE `tr[C (F F^H)^{-1}]` of L_h pilots on `set` (any
/// placement), `C = sigma^2 diag(1/|x|^2)`.
pub fn sparse_mse_general(x: &[Complex64], set: &IndexSet, cfg: &SystemConfig, sigma2: f64) -> Result<f64> {
    if x.len() != set.len() || set.len() != cfg.lh {
        return Err(Error::Dimension("need L_h pilots".into()));
    }
    let f = dft_submatrix(cfg.m, set, &IndexSet::range(cfg.m, 0, cfg.lh)?)?;
    let chol = (&f * f.adjoint())
        .cholesky()
        .ok_or_else(|| Error::Singular("F F^H is singular for this placement".into()))?;
    // diag of the inverse as squared column norms of L^{-1}
    let mut linv = CMatrix::identity(cfg.lh, cfg.lh);
    chol.l_dirty().solve_lower_triangular_mut(&mut linv);
    let mut total = 0.0;
    for (i, z) in x.iter().enumerate() {
        let d: f64 = (i..cfg.lh).map(|r| linv[(r, i)].norm_sqr()).sum();
        if !d.is_finite() {
            return Err(Error::Singular("F F^H is singular for this placement".into()));
        }
        total += sigma2 / z.norm_sqr() * d;
    }
    Ok(total)
}

/// Antenna energy `||x||^2 + (1/M) x^H G x` of a sparse CP-OFDM vector.
pub fn sparse_antenna_energy(x: &[Complex64], set: &IndexSet, g: &CMatrix) -> f64 {
    let idx = set.as_slice();
    let m = g.nrows() as f64;
    let mut cp = ZERO;
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            cp += x[i].conj() * g[(a, b)] * x[j];
        }
    }
    sum_sq(x) + cp.re / m
}

/// Full OQAM MSE with uniform cyclic `beta` neighbours:
/// `(1/M) sum sigma^2 / |x_m + beta x_{m-1} + beta x_{m+1}|^2`.
pub fn full_oqam_mse(x: &[Complex64], beta: f64, sigma2: f64) -> f64 {
    let m = x.len();
    (0..m)
        .map(|i| sigma2 / (x[i] + beta * x[(i + m - 1) % m] + beta * x[(i + 1) % m]).norm_sqr())
        .sum::<f64>()
        / m as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail lines of the verification suite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(CheckResult { name: name.into(), passed, detail });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        Ok(())
    }
}

fn random_unit<R: Rng>(r: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, r.random_range(0.0..2.0 * PI))
}

/// Optimality and identity checks at `cfg`.
pub fn verify_optimality(cfg: &SystemConfig, trials: usize, seed: u64) -> Result<VerificationReport> {
    verify_with(&Modems::new(cfg)?, trials, seed)
}

pub fn verify_with(modems: &Modems, trials: usize, seed: u64) -> Result<VerificationReport> {
    if trials < 100 {
        return Err(Error::Parameter(format!("need at least 100 trials, got {trials}")));
    }
    let cfg = modems.cfg;
    let (m, lh, nu) = (cfg.m, cfg.lh, cfg.nu());
    let e = cfg.energy;
    let sigma2 = 1.0;
    let mut rep = VerificationReport::default();
    let g = cp_gram(m, nu)?;

    // CP Gram matrix: trace M nu, entries summing to zero
    let tr = g.trace().re;
    let total: Complex64 = g.iter().sum();
    rep.push(
        "cp-gram-trace",
        (tr - (m * nu) as f64).abs() <= 1e-9 * (m * nu) as f64 && total.norm() <= 1e-9 * (m * nu) as f64,
        format!("trace {tr:.6} (M nu = {}), entry sum {:.2e}", m * nu, total.norm()),
    );

    // CP Gram matrix on equispaced sets, every offset
    let mut worst = 0.0f64;
    for i0 in 0..m / lh {
        let set = equispaced_set(m, lh, i0)?;
        let idx = set.as_slice();
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                let want = if a == b { nu as f64 } else { -1.0 };
                worst = worst.max((g[(i, j)] - want).norm());
            }
        }
    }
    rep.push("cp-gram-equispaced", worst < 1e-9, format!("max deviation {worst:.2e} over {} offsets", m / lh));

    // zero CP energy of equal sparse pilots, every offset
    let mut cp_worst = 0.0f64;
    for i0 in 0..m / lh {
        let p = make_sparse_equal(modems, Scheme::Qam, lh, i0, e)?;
        cp_worst = cp_worst.max(modems.ofdm.modulate(p.column(0))?.cp_energy());
    }
    rep.push("cp-energy-sparse", cp_worst < 1e-18 * e, format!("max CP energy {cp_worst:.2e} (E = {e})"));

    // two-column equipowered full preambles
    let mut tc_dev = 0.0f64;
    let mut tc_cp = 0.0f64;
    let mut tc_mse = 0.0f64;
    let mut tc_papr_ok = true;
    let all_equal = make_full_equal(modems, Scheme::Qam, e, EnergyMode::Antenna)?;
    let papr_equal = papr(&modems.ofdm.modulate(all_equal.column(0))?.s)?;
    let mut r = rng::rng(rng::derive(seed, &[2]));
    if 2 * lh < m {
        for t in 0..trials.min(200) {
            let k = r.random_range(0..m / 2 - nu.min(m / 2 - 1));
            let k = k.min(m - nu - 1 - m / 2);
            let gamma = if t == 0 { 1.0 } else { r.random_range(0.05..1.0) };
            let theta = r.random_range(0.0..2.0 * PI);
            let sign = if t % 2 == 0 { 1.0 } else { -1.0 };
            let p = make_full_equipower_qam(modems, k, k + m / 2, gamma, theta, e, sign)?;
            for z in p.column(0) {
                tc_dev = tc_dev.max((z.norm_sqr() - e / m as f64).abs() / (e / m as f64));
            }
            let frame = modems.ofdm.modulate(p.column(0))?;
            tc_cp = tc_cp.max(frame.cp_energy());
            let mse_full: f64 =
                lh as f64 / (m * m) as f64 * p.column(0).iter().map(|z| sigma2 / z.norm_sqr()).sum::<f64>();
            tc_mse = tc_mse.max((mse_full - lh as f64 * sigma2 / e).abs() / (lh as f64 * sigma2 / e));
            if gamma < 1.0 && papr(&frame.s)? >= papr_equal {
                tc_papr_ok = false;
            }
        }
    }
    rep.push(
        "two-column-equipower",
        tc_dev < 1e-12 && tc_cp < 1e-18 * e.max(1.0) * m as f64 && tc_mse < 1e-9 && tc_papr_ok,
        format!(
            "modulus dev {tc_dev:.1e}, CP energy {tc_cp:.1e}, MSE dev {tc_mse:.1e}, PAPR below all-equal ({papr_equal:.0}): {tc_papr_ok}"
        ),
    );

    // sparse OQAM antenna energy equals the budget
    let mut p3 = 0.0f64;
    for i0 in 0..m / lh {
        let p = make_sparse_equal(modems, Scheme::Oqam, lh, i0, e)?;
        p3 = p3.max((antenna_energy(&p, modems)? - e).abs() / e);
    }
    rep.push("sparse-oqam-energy", p3 < 1e-6, format!("max relative SFB-energy deviation {p3:.2e}"));

    // (a) genie bound over random feasible sparse preambles, any placement
    let genie = lh as f64 * sigma2 / e;
    let mut min_mse = f64::INFINITY;
    let mut r = rng::rng(rng::derive(seed, &[3]));
    for t in 0..trials {
        let set = if t % 2 == 0 {
            equispaced_set(m, lh, r.random_range(0..m / lh))?
        } else {
            let mut idx: Vec<usize> = rand::seq::index::sample(&mut r, m, lh).into_vec();
            idx.sort_unstable();
            IndexSet::new(m, idx)?
        };
        let mut x: Vec<Complex64> =
            (0..lh).map(|_| random_unit(&mut r) * r.random_range(0.2..1.0)).collect();
        let en = sparse_antenna_energy(&x, &set, &g);
        x.iter_mut().for_each(|z| *z *= (e / en).sqrt());
        if let Ok(v) = sparse_mse_general(&x, &set, &cfg, sigma2) {
            min_mse = min_mse.min(v);
        }
    }
    let eq = make_sparse_equal(modems, Scheme::Qam, lh, 0, e)?;
    let eq_mse = sparse_mse_general(&eq.pilot_values(), &eq.pilots, &cfg, sigma2)?;
    rep.push(
        "genie-bound",
        min_mse >= genie * (1.0 - 1e-9) && (eq_mse - genie).abs() <= 1e-9 * genie,
        format!("equal pilots {eq_mse:.6e}, bound {genie:.6e}, min over {trials} random {min_mse:.6e}"),
    );

    // local optimality of equal sparse pilots: stationarity and curvature along random feasible directions
    let set = equispaced_set(m, lh, 0)?;
    let mse_sparse = |x: &[Complex64]| sigma2 / lh as f64 * x.iter().map(|z| 1.0 / z.norm_sqr()).sum::<f64>();
    let xstar = eq.pilot_values();
    let fstar = mse_sparse(&xstar);
    let mut stat = 0.0f64;
    let mut curv_min = f64::INFINITY;
    let h = 1e-4 * (e / lh as f64).sqrt();
    for _ in 0..trials.min(1000) {
        let dir: Vec<Complex64> = (0..lh).map(|_| rng::cn(&mut r, 1.0)).collect();
        let on = |s: f64| {
            let mut x: Vec<Complex64> = xstar.iter().zip(&dir).map(|(a, d)| a + d * s).collect();
            let en = sparse_antenna_energy(&x, &set, &g);
            x.iter_mut().for_each(|z| *z *= (e / en).sqrt());
            mse_sparse(&x)
        };
        let (fp, fm) = (on(h), on(-h));
        stat = stat.max(((fp - fm) / (2.0 * h)).abs() / fstar);
        curv_min = curv_min.min((fp + fm - 2.0 * fstar) / (h * h));
    }
    rep.push(
        "sparse-local-optimum",
        stat < 1e-4 && curv_min >= -1e-9 * fstar,
        format!("max relative slope {stat:.1e}, min curvature {curv_min:.3e}"),
    );

    // (b) full OQAM under the SFB-input constraint
    let beta = modems.beta();
    let opt = m as f64 * sigma2 / (e * (1.0 + 2.0 * beta).powi(2));
    let ones = vec![Complex64::new((e / m as f64).sqrt(), 0.0); m];
    let eq_full = full_oqam_mse(&ones, beta, sigma2);
    let mut min_full = f64::INFINITY;
    let mut ord1 = true;
    let mut ord2 = true;
    for t in 0..trials {
        let phase_only = t % 2 == 0;
        let mods: Vec<f64> = (0..m).map(|_| if phase_only { 1.0 } else { r.random_range(0.1..1.0) }).collect();
        let s = (e / mods.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let spread = r.random_range(0.0..PI);
        let x: Vec<Complex64> =
            mods.iter().map(|&a| Complex64::from_polar(a * s, r.random_range(-spread..=spread))).collect();
        let same_phase: Vec<Complex64> = mods.iter().map(|&a| Complex64::new(a * s, 0.0)).collect();
        let v = full_oqam_mse(&x, beta, sigma2);
        let v_same = full_oqam_mse(&same_phase, beta, sigma2);
        min_full = min_full.min(v).min(v_same);
        if phase_only {
            ord1 &= eq_full <= v * (1.0 + 1e-12);
        } else {
            ord2 &= v_same <= v * (1.0 + 1e-12);
        }
    }
    rep.push(
        "full-oqam-optimum",
        (eq_full - opt).abs() <= 1e-9 * opt && min_full >= opt * (1.0 - 1e-9),
        format!("equal {eq_full:.6e}, optimum {opt:.6e}, min over {trials} random {min_full:.6e}"),
    );
    rep.push("subclass-order", ord1 && ord2, format!("1a <= 1b: {ord1}, 2a <= 2b: {ord2}"));

    // (d) uniqueness: equipowered phase patterns on I_{L_h}
    let amp = (e / lh as f64).sqrt();
    let eq_cp = sparse_antenna_energy(&vec![Complex64::new(amp, 0.0); lh], &set, &g) - e;
    let mut min_cp = f64::INFINITY;
    for t in 0..trials {
        let x: Vec<Complex64> = if t < lh - 1 {
            // discrete linear phase ramps, the hardest structured candidates
            (0..lh).map(|k| Complex64::from_polar(amp, -2.0 * PI * ((t + 1) * k) as f64 / lh as f64)).collect()
        } else {
            (0..lh).map(|_| random_unit(&mut r) * amp).collect()
        };
        let cp = sparse_antenna_energy(&x, &set, &g) - e;
        min_cp = min_cp.min(cp);
    }
    rep.push(
        "uniqueness",
        eq_cp.abs() < 1e-12 * e && min_cp > 1e-12 * e,
        format!("equal-phase CP energy {eq_cp:.1e}, min over {trials} other patterns {min_cp:.3e}"),
    );

    // trace inequality on random matrices
    let mut trace_ok = true;
    for _ in 0..50 {
        let (rows, cols) = (r.random_range(1..6), r.random_range(1..6));
        let a = CMatrix::from_fn(rows, cols, |_, _| rng::cn(&mut r, 1.0));
        let b = CMatrix::from_fn(rows, cols, |_, _| rng::cn(&mut r, 1.0));
        let (lhs, rhs) = von_neumann(&a, &b)?;
        trace_ok &= lhs <= rhs * (1.0 + 1e-12) + 1e-12;
    }
    rep.push("trace-inequality", trace_ok, "trace inequality on 50 random pairs".into());

    // AFB noise covariance, Monte Carlo vs sigma^2 B
    let (adj_err, off_max) = afb_noise_check(modems, 2000, rng::derive(seed, &[4]))?;
    rep.push(
        "afb-noise-cov",
        adj_err < 0.02 && off_max < 0.02,
        format!("adjacent relative error {adj_err:.3}, max off-band {off_max:.4} sigma^2"),
    );
    Ok(rep)
}

/// Empirical AFB noise covariance over `n` unit-variance noise vectors:
/// relative error of the `(m, m+1)` terms against `beta` and the largest
/// `|dm| >= 2` magnitude.
pub fn afb_noise_check(modems: &Modems, n: usize, seed: u64) -> Result<(f64, f64)> {
    let m = modems.cfg.m;
    let lg = modems.bank.lg();
    let b = afb_noise_cov_on(modems.bank.prototype(), PhaseRule::Equal, &IndexSet::full(m), 0..lg);
    let mut acc = vec![ZERO; 4];
    let mut r = rng::rng(seed);
    for _ in 0..n {
        let w = rng::cn_vec(&mut r, lg, 1.0);
        let y = modems.bank.afb_column(&w, 0, PhaseRule::Equal, 0..lg)?;
        for k in 1..m - 1 {
            acc[0] += y[k] * y[k + 1].conj();
            acc[1] += y[k] * y[k].conj();
            acc[2] += y[k] * y[(k + 2) % m].conj();
            acc[3] += y[k] * y[(k + m / 2) % m].conj();
        }
    }
    let cnt = (n * (m - 2)) as f64;
    let adj = acc[0] / cnt;
    let want = b[(2, 1)];
    let adj_err = (adj - want).norm() / want.norm();
    let off = (acc[2] / cnt).norm().max((acc[3] / cnt).norm());
    Ok((adj_err, off))
}

/// Largest `|K_0(dm)|` with `2 <= |dm| <= M/2`, relative to `beta`.
pub fn second_order_residual(modems: &Modems) -> f64 {
    let t = modems.bank.table();
    let m = modems.cfg.m as i64;
    (2..=m / 2).map(|dm| t.kernel(0, dm).norm()).fold(0.0, f64::max) / t.beta.abs().max(1e-300)
}

/// Data-to-pilot power ratio of a sparse-data OQAM preamble.
pub fn data_power_ratio(p: &Preamble) -> f64 {
    let cells = p.data_cells();
    if cells.is_empty() {
        return 0.0;
    }
    let d: f64 = cells.iter().map(|&(m, n)| p.amplitude(m, n).powi(2)).sum::<f64>() / cells.len() as f64;
    d / pilot_energy(p)
}

/// Whether `s` is an OQAM sparse-data scenario with side-vector help pilots.
pub fn has_help_pilots(s: Scenario) -> bool {
    matches!(s, Scenario::Oqam2 | Scenario::Oqam3)
}

/// `B` spectrum check helper: dense vector of `x^H B x` for tests.
pub fn quadratic_form(b: &CMatrix, x: &[Complex64]) -> f64 {
    let v = DVector::from_column_slice(x);
    (v.adjoint() * b * &v)[(0, 0)].re
}

/// Dense `(1/M) F_{M x L_h} F^H_{M x L_h}` (test oracle for the projector).
pub fn projector_matrix(cfg: &SystemConfig) -> Result<CMatrix> {
    let f = dft_first_columns(cfg.m, cfg.lh)?;
    Ok(&f * f.adjoint() / Complex64::new(cfg.m as f64, 0.0))
}

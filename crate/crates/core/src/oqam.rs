//! OFDM/OQAM filter bank: prototype design, synthesis/analysis, the
//! intrinsic-interference (ambiguity) table, pseudo-pilots and help pilots.
//!
//! Subcarrier functions follow
//! `g_{m,n}(l) = g(l - n M/2) exp(j 2 pi m (l - (L_g-1)/2) / M) exp(j phi_{m,n})`.
//! Inner products between them are evaluated through the kernel
//! `K_d(dm) = sum_l g(l - d M/2) g(l) exp(j 2 pi dm (l - c) / M)`, `c = (L_g-1)/2`,
//! using `<g'_{m,n}, g'_{p,q}> = exp(j pi (m-p) q) K_{n-q}(m-p)`.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Dft, SystemConfig};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// How the prototype is generated.
#[derive(Debug, Clone, PartialEq)]
pub enum PrototypeDesign {
    /// Frequency-sampling design from samples `H_0 = 1, H_1, ..., H_{K-1}`.
    FrequencySampling(Vec<f64>),
    /// Gaussian orthogonalized in frequency then in time (extended Gaussian
    /// function). `alpha = 1` is the isotropic (IOTA) pulse; `alpha < 1`
    /// widens it in time.
    Egf { alpha: f64 },
}

/// Time-spread parameter of the shipped K >= 3 pulse.
pub const DEFAULT_EGF_ALPHA: f64 = 0.95;

impl PrototypeDesign {
    /// Published frequency-sampling coefficients for K = 1..4.
    pub fn frequency_sampling(k: usize) -> Result<Self> {
        let h = match k {
            1 => vec![1.0],
            2 => vec![1.0, std::f64::consts::FRAC_1_SQRT_2],
            3 => vec![1.0, 0.911438, 0.411438],
            4 => vec![1.0, 0.97195983, std::f64::consts::FRAC_1_SQRT_2, 0.23514695],
            _ => {
                return Err(Error::Unsupported(format!(
                    "no published frequency-sampling coefficients for K = {k}"
                )))
            }
        };
        Ok(Self::FrequencySampling(h))
    }

    /// Shipped design: frequency sampling for K <= 2, EGF for K >= 3.
    pub fn default_for(k: usize) -> Result<Self> {
        match k {
            1 | 2 => Self::frequency_sampling(k),
            3..=5 => Ok(Self::Egf { alpha: DEFAULT_EGF_ALPHA }),
            _ => Err(Error::Unsupported(format!("K = {k} outside 1..=5"))),
        }
    }

    /// `default`, `frequency-sampling` (alias `phydyas`), `egf` or `egf:<alpha>`.
    pub fn parse(name: &str, k: usize) -> Result<Self> {
        let name = name.trim().to_ascii_lowercase();
        match name.as_str() {
            "default" => Self::default_for(k),
            "frequency-sampling" | "phydyas" => Self::frequency_sampling(k),
            "egf" | "iota" => Ok(Self::Egf {
                alpha: if name == "iota" { 1.0 } else { DEFAULT_EGF_ALPHA },
            }),
            _ => match name.strip_prefix("egf:") {
                Some(a) => {
                    let alpha: f64 =
                        a.parse().map_err(|_| Error::Parse(format!("bad EGF parameter '{a}'")))?;
                    if !(alpha.is_finite() && alpha > 0.0) {
                        return Err(Error::Parameter(format!("EGF parameter {alpha} must be > 0")));
                    }
                    Ok(Self::Egf { alpha })
                }
                None => Err(Error::Parse(format!("unknown prototype design '{name}'"))),
            },
        }
    }
}

/// Real symmetric unit-energy pulse of length K*M.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeFilter {
    m: usize,
    k: usize,
    g: Vec<f64>,
}

/// Default prototype for `(M, K)`.
pub fn design_prototype(m: usize, k: usize) -> Result<PrototypeFilter> {
    PrototypeFilter::design(m, k, &PrototypeDesign::default_for(k)?)
}

impl PrototypeFilter {
    pub fn design(m: usize, k: usize, design: &PrototypeDesign) -> Result<Self> {
        if !(1..=5).contains(&k) {
            return Err(Error::Unsupported(format!("K = {k} outside 1..=5")));
        }
        if m < 2 || m % 2 != 0 {
            return Err(Error::Config(format!("M = {m} must be even")));
        }
        let g = match design {
            PrototypeDesign::FrequencySampling(h) => frequency_sampling(m, k, h)?,
            PrototypeDesign::Egf { alpha } => egf(m, k, *alpha)?,
        };
        Self::from_coefficients(m, k, g)
    }

    /// Wrap externally supplied coefficients (renormalized to unit energy).
    pub fn from_coefficients(m: usize, k: usize, mut g: Vec<f64>) -> Result<Self> {
        if g.len() != k * m {
            return Err(Error::Dimension(format!("prototype has {} taps, expected K*M = {}", g.len(), k * m)));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("prototype has non-finite taps".into()));
        }
        let e: f64 = g.iter().map(|v| v * v).sum();
        if e <= 0.0 {
            return Err(Error::Parameter("prototype has zero energy".into()));
        }
        let s = e.sqrt();
        g.iter_mut().for_each(|v| *v /= s);
        Ok(Self { m, k, g })
    }

    pub fn taps(&self) -> &[f64] {
        &self.g
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// One coefficient per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.g.len() * 26);
        for v in &self.g {
            s.push_str(&format!("{v:.17e}\n"));
        }
        s
    }

    /// Parse one real per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str, m: usize) -> Result<Self> {
        let mut g = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            g.push(t.parse::<f64>().map_err(|_| Error::Parse(format!("line {}: '{t}'", i + 1)))?);
        }
        if m == 0 || g.len() % m != 0 {
            return Err(Error::Dimension(format!("{} taps is not a multiple of M = {m}", g.len())));
        }
        let k = g.len() / m;
        if !(1..=5).contains(&k) {
            return Err(Error::Unsupported(format!("K = {k} outside 1..=5")));
        }
        Self::from_coefficients(m, k, g)
    }

    /// Largest deviation from `g(l) = g(L_g - 1 - l)`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.g.len();
        (0..n).map(|l| (self.g[l] - self.g[n - 1 - l]).abs()).fold(0.0, f64::max)
    }

    /// Sample range `[ceil(L_g/2) - h, ceil(L_g/2) + h]`, `h = ceil(span/2)`,
    /// clipped to the pulse support.
    pub fn central_window(&self, span: usize) -> Range<usize> {
        let h = span.div_ceil(2);
        let c = self.g.len().div_ceil(2);
        c.saturating_sub(h)..(c + h + 1).min(self.g.len())
    }

    /// Fraction of the pulse energy inside `central_window(span)`.
    pub fn window_energy(&self, span: usize) -> f64 {
        self.g[self.central_window(span)].iter().map(|v| v * v).sum()
    }
}

fn frequency_sampling(m: usize, k: usize, h: &[f64]) -> Result<Vec<f64>> {
    if h.is_empty() || h.len() > k {
        return Err(Error::Parameter(format!("need 1..=K frequency samples, got {}", h.len())));
    }
    let l = k * m;
    let c = (l as f64 - 1.0) / 2.0;
    Ok((0..l)
        .map(|i| {
            let t = i as f64 - c;
            h[0] + 2.0
                * h.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(q, hq)| hq * (2.0 * PI * q as f64 * t / l as f64).cos())
                    .sum::<f64>()
        })
        .collect())
}

fn egf(m: usize, k: usize, alpha: f64) -> Result<Vec<f64>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Parameter(format!("EGF parameter {alpha} must be > 0")));
    }
    if m % 2 != 0 {
        return Err(Error::Config("EGF design needs even M".into()));
    }
    // Long support so both orthogonalization sums see a (numerically)
    // untruncated Gaussian.
    let over = 16;
    let n = over * m;
    let t = m as f64 / (2.0 * alpha).sqrt();
    let centre = n as f64 / 2.0 - 0.5;
    let mut x: Vec<Complex64> = (0..n)
        .map(|l| {
            let u = (l as f64 - centre) / t;
            Complex64::new((-PI * u * u).exp(), 0.0)
        })
        .collect();

    // Frequency orthogonalization over shifts of 1/M cycles/sample.
    let dft = Dft::new(n);
    dft.forward(&mut x);
    let mut fold = vec![0.0; over];
    for (i, z) in x.iter().enumerate() {
        fold[i % over] += z.norm_sqr();
    }
    for (i, z) in x.iter_mut().enumerate() {
        *z /= fold[i % over].sqrt();
    }
    dft.inverse(&mut x);
    let y: Vec<f64> = x.iter().map(|z| z.re / n as f64).collect();

    // Time orthogonalization over shifts of M/2 samples.
    let half = m / 2;
    let mut tfold = vec![0.0; half];
    for (i, v) in y.iter().enumerate() {
        tfold[i % half] += v * v;
    }
    let z: Vec<f64> = y.iter().enumerate().map(|(i, v)| v / tfold[i % half].sqrt()).collect();

    let l = k * m;
    let start = n / 2 - l / 2;
    let mut g = z[start..start + l].to_vec();
    // Enforce exact symmetry (the construction is symmetric up to rounding).
    for i in 0..l / 2 {
        let v = 0.5 * (g[i] + g[l - 1 - i]);
        g[i] = v;
        g[l - 1 - i] = v;
    }
    Ok(g)
}

/// Phase convention of an OQAM grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseRule {
    /// `phi = 0` everywhere (preamble-only convention).
    Equal,
    /// `phi_{m,n} = (pi/2) ((m + n) mod 2)`.
    Data,
}

impl PhaseRule {
    pub fn phase(self, m: usize, n: usize) -> f64 {
        match self {
            PhaseRule::Equal => 0.0,
            PhaseRule::Data => {
                if (m + n) % 2 == 1 {
                    PI / 2.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn phasor(self, m: usize, n: usize) -> Complex64 {
        match self {
            PhaseRule::Equal => Complex64::new(1.0, 0.0),
            PhaseRule::Data => {
                if (m + n) % 2 == 1 {
                    Complex64::new(0.0, 1.0)
                } else {
                    Complex64::new(1.0, 0.0)
                }
            }
        }
    }
}

/// Real OQAM symbols `a[m, n]` on `cols` symbol times, with a flag telling
/// whether the receiver knows each symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OqamGrid {
    m: usize,
    cols: usize,
    a: Vec<f64>,
    known: Vec<bool>,
    pub rule: PhaseRule,
}

impl OqamGrid {
    pub fn new(m: usize, cols: usize, rule: PhaseRule) -> Self {
        Self { m, cols, a: vec![0.0; m * cols], known: vec![true; m * cols], rule }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn idx(&self, m: usize, n: usize) -> usize {
        assert!(m < self.m && n < self.cols, "grid index ({m}, {n}) out of range");
        n * self.m + m
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.a[self.idx(m, n)]
    }

    pub fn set(&mut self, m: usize, n: usize, a: f64) {
        let i = self.idx(m, n);
        self.a[i] = a;
        self.known[i] = true;
    }

    /// Store a symbol the receiver does not know (data).
    pub fn set_unknown(&mut self, m: usize, n: usize, a: f64) {
        let i = self.idx(m, n);
        self.a[i] = a;
        self.known[i] = false;
    }

    pub fn is_known(&self, m: usize, n: usize) -> bool {
        self.known[self.idx(m, n)]
    }

    /// Complex symbol `a exp(j phi)`.
    pub fn symbol(&self, m: usize, n: usize) -> Complex64 {
        self.rule.phasor(m, n) * self.get(m, n)
    }

    pub fn column(&self, n: usize) -> &[f64] {
        &self.a[n * self.m..(n + 1) * self.m]
    }

    pub fn scale(&mut self, s: f64) {
        self.a.iter_mut().for_each(|v| *v *= s);
    }

    /// Copy with the symbols of the cells rejected by `keep` set to zero.
    pub fn filtered(&self, keep: impl Fn(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        for n in 0..self.cols {
            for m in 0..self.m {
                if !keep(m, n) {
                    let i = out.idx(m, n);
                    out.a[i] = 0.0;
                }
            }
        }
        out
    }

    /// Number of samples produced by the synthesis bank.
    pub fn frame_len(&self, lg: usize) -> usize {
        lg + (self.cols.max(1) - 1) * self.m / 2
    }

    /// First-order neighbourhood of `(p, q)` inside the grid (frequency wraps).
    pub fn neighbours(&self, p: usize, q: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(8);
        for dn in [-1i64, 0, 1] {
            let n = q as i64 + dn;
            if n < 0 || n >= self.cols as i64 {
                continue;
            }
            for dm in [-1i64, 0, 1] {
                if dm == 0 && dn == 0 {
                    continue;
                }
                let m = (p as i64 + dm).rem_euclid(self.m as i64) as usize;
                out.push((m, n as usize));
            }
        }
        out
    }
}

/// Synthesis/analysis filter bank with cached kernel table.
#[derive(Debug, Clone)]
pub struct FilterBank {
    proto: PrototypeFilter,
    dft: Dft,
    table: AmbiguityTable,
}

impl FilterBank {
    pub fn new(proto: &PrototypeFilter) -> Self {
        Self { proto: proto.clone(), dft: Dft::new(proto.m), table: AmbiguityTable::new(proto) }
    }

    pub fn prototype(&self) -> &PrototypeFilter {
        &self.proto
    }

    pub fn table(&self) -> &AmbiguityTable {
        &self.table
    }

    pub fn m(&self) -> usize {
        self.proto.m
    }

    pub fn lg(&self) -> usize {
        self.proto.g.len()
    }

    fn centre_phase(&self, m: usize) -> Complex64 {
        // exp(-j 2 pi m c / M), c = (L_g - 1)/2
        let lg = self.lg() as f64;
        let mm = self.m() as f64;
        Complex64::from_polar(1.0, -PI * (m as f64) * (lg - 1.0) / mm)
    }

    /// Synthesis: `s(l) = sum a_{m,n} g_{m,n}(l)` over the whole grid.
    pub fn sfb(&self, grid: &OqamGrid) -> Result<Vec<Complex64>> {
        self.sfb_window(grid, 0..self.lg())
    }

    /// Synthesis with every pulse restricted to the sample range `window`
    /// of its own support (used by the truncated-pulse setup).
    pub fn sfb_window(&self, grid: &OqamGrid, window: Range<usize>) -> Result<Vec<Complex64>> {
        let m = self.m();
        if grid.m() != m {
            return Err(Error::Dimension(format!("grid has {} subcarriers, bank has {m}", grid.m())));
        }
        let lg = self.lg();
        let window = window.start.min(lg)..window.end.min(lg);
        let mut s = vec![ZERO; grid.frame_len(lg)];
        let mut v = vec![ZERO; m];
        for n in 0..grid.cols() {
            let col = grid.column(n);
            if col.iter().all(|&a| a == 0.0) {
                continue;
            }
            for (mi, z) in v.iter_mut().enumerate() {
                *z = grid.rule.phasor(mi, n) * col[mi] * self.centre_phase(mi);
            }
            self.dft.inverse(&mut v);
            let off = n * m / 2;
            for l in window.clone() {
                s[off + l] += v[(off + l) % m] * self.proto.g[l];
            }
        }
        Ok(s)
    }

    /// Analysis outputs `y_{p,q} = sum_l r(l) g*_{p,q}(l)` for every `p` in
    /// column `q`, using only pulse samples in `window`.
    pub fn afb_column(&self, r: &[Complex64], q: usize, rule: PhaseRule, window: Range<usize>) -> Result<Vec<Complex64>> {
        let m = self.m();
        let lg = self.lg();
        let off = q * m / 2;
        let window = window.start.min(lg)..window.end.min(lg);
        if r.len() < off + window.end {
            return Err(Error::Dimension(format!(
                "received {} samples, column {q} needs {}",
                r.len(),
                off + window.end
            )));
        }
        let mut w = vec![ZERO; m];
        for l in window {
            w[(off + l) % m] += r[off + l] * self.proto.g[l];
        }
        self.dft.forward(&mut w);
        Ok(w
            .into_iter()
            .enumerate()
            .map(|(p, z)| z * self.centre_phase(p).conj() * rule.phasor(p, q).conj())
            .collect())
    }

    /// Analysis at selected points.
    pub fn afb(&self, r: &[Complex64], rule: PhaseRule, points: &[(usize, usize)]) -> Result<Vec<Complex64>> {
        let mut cols: Vec<usize> = points.iter().map(|&(_, q)| q).collect();
        cols.sort_unstable();
        cols.dedup();
        let mut outs = Vec::with_capacity(cols.len());
        for &q in &cols {
            outs.push(self.afb_column(r, q, rule, 0..self.lg())?);
        }
        points
            .iter()
            .map(|&(p, q)| {
                if p >= self.m() {
                    return Err(Error::Dimension(format!("subcarrier {p} out of range")));
                }
                let ci = cols.binary_search(&q).expect("column collected above");
                Ok(outs[ci][p])
            })
            .collect()
    }
}

/// Synthesis filter bank (free-function form).
pub fn sfb(grid: &OqamGrid, g: &PrototypeFilter, cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    if g.m != cfg.m {
        return Err(Error::Dimension(format!("prototype built for M = {}, config has {}", g.m, cfg.m)));
    }
    FilterBank::new(g).sfb(grid)
}

/// Analysis filter bank (free-function form).
pub fn afb(
    r: &[Complex64],
    g: &PrototypeFilter,
    cfg: &SystemConfig,
    rule: PhaseRule,
    points: &[(usize, usize)],
) -> Result<Vec<Complex64>> {
    if g.m != cfg.m {
        return Err(Error::Dimension(format!("prototype built for M = {}, config has {}", g.m, cfg.m)));
    }
    FilterBank::new(g).afb(r, rule, points)
}

/// Intrinsic-interference table computed from the actual prototype.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguityTable {
    m: usize,
    lg: usize,
    depth: usize,
    /// `kernels[d + depth][dm]` for `dm = 0..M`.
    kernels: Vec<Vec<Complex64>>,
    /// Equal-phase weights at an interior point, `[dm + 1][dn + 1]`.
    pub weights: [[Complex64; 3]; 3],
    /// `u[+-1, 0]` at interior subcarriers.
    pub beta: f64,
    /// Weight of subcarrier M-1 seen from subcarrier 0 (equal phases).
    pub edge_low: f64,
    /// Weight of subcarrier 0 seen from subcarrier M-1 (equal phases).
    pub edge_high: f64,
}

impl AmbiguityTable {
    pub fn new(proto: &PrototypeFilter) -> Self {
        let m = proto.m;
        let lg = proto.g.len();
        let depth = (2 * lg).div_ceil(m).saturating_sub(1).max(1);
        let dft = Dft::new(m);
        let c = (lg as f64 - 1.0) / 2.0;
        let kernels: Vec<Vec<Complex64>> = (-(depth as i64)..=depth as i64)
            .map(|d| {
                let shift = d * m as i64 / 2;
                let mut w = vec![ZERO; m];
                for l in 0..lg as i64 {
                    let ls = l - shift;
                    if ls < 0 || ls >= lg as i64 {
                        continue;
                    }
                    w[l as usize % m] += proto.g[ls as usize] * proto.g[l as usize];
                }
                dft.inverse(&mut w);
                w.into_iter()
                    .enumerate()
                    .map(|(dm, z)| z * Complex64::from_polar(1.0, -2.0 * PI * dm as f64 * c / m as f64))
                    .collect()
            })
            .collect();
        let mut t = Self {
            m,
            lg,
            depth,
            kernels,
            weights: [[ZERO; 3]; 3],
            beta: 0.0,
            edge_low: 0.0,
            edge_high: 0.0,
        };
        for dm in -1i64..=1 {
            for dn in -1i64..=1 {
                t.weights[(dm + 1) as usize][(dn + 1) as usize] = t.kernel(dn, dm);
            }
        }
        t.beta = t.kernel(0, 1).re;
        t.edge_low = t.inner(m - 1, 0, 0, 0).re;
        t.edge_high = t.inner(0, 0, m - 1, 0).re;
        t
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `K_d(dm)` for any integer `dm` (zero outside the pulse overlap).
    pub fn kernel(&self, d: i64, dm: i64) -> Complex64 {
        if d.unsigned_abs() as usize > self.depth {
            return ZERO;
        }
        let mm = self.m as i64;
        let wraps = dm.div_euclid(mm);
        let r = dm.rem_euclid(mm) as usize;
        let v = self.kernels[(d + self.depth as i64) as usize][r];
        // K(dm + M) = (-1)^(L_g - 1) K(dm)
        if self.lg % 2 == 0 && wraps % 2 != 0 {
            -v
        } else {
            v
        }
    }

    /// Phase-free inner product `sum_l g'_{m,n}(l) conj(g'_{p,q}(l))`.
    pub fn inner(&self, m: usize, n: usize, p: usize, q: usize) -> Complex64 {
        let dm = m as i64 - p as i64;
        let sign = if (dm * q as i64).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        self.kernel(n as i64 - q as i64, dm) * sign
    }

    /// Inner product including the grid phases: `<g_{m,n}, g_{p,q}>`.
    pub fn inner_phased(&self, rule: PhaseRule, m: usize, n: usize, p: usize, q: usize) -> Complex64 {
        self.inner(m, n, p, q) * rule.phasor(m, n) * rule.phasor(p, q).conj()
    }

    /// Magnitude of the interior weight at offset `(dm, dn)`.
    pub fn magnitude(&self, dm: i64, dn: i64) -> f64 {
        self.kernel(dn, dm).norm()
    }

    /// Equal-phase weight at an interior point.
    pub fn weight(&self, dm: i64, dn: i64) -> Complex64 {
        self.kernel(dn, dm)
    }

    /// `sum_{l=+-1} u(l,1)^2 / u(0,1)^2`.
    pub fn zeta(&self) -> f64 {
        (self.magnitude(1, 1).powi(2) + self.magnitude(-1, 1).powi(2)) / self.magnitude(0, 1).powi(2)
    }

    /// Largest violation of real-field orthogonality between `(p, q)` for
    /// `p` in `ps` and every point with `|dm| <= dmax`, `|dn| <= depth`, in
    /// data phase mode.
    pub fn orthogonality_residual(&self, ps: &[usize], qs: &[usize], dmax: i64) -> f64 {
        let mut worst = 0.0f64;
        let mm = self.m as i64;
        for &p in ps {
            for &q in qs {
                for dn in -(self.depth as i64)..=self.depth as i64 {
                    let n = q as i64 + dn;
                    if n < 0 {
                        continue;
                    }
                    for dm in -dmax..=dmax {
                        let m = (p as i64 + dm).rem_euclid(mm) as usize;
                        let v = self.inner_phased(PhaseRule::Data, m, n as usize, p, q).re;
                        let target = if dm == 0 && dn == 0 { 1.0 } else { 0.0 };
                        worst = worst.max((v - target).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Ambiguity table of `g` (free-function form).
pub fn ambiguity(g: &PrototypeFilter, cfg: &SystemConfig) -> Result<AmbiguityTable> {
    if g.m != cfg.m {
        return Err(Error::Dimension(format!("prototype built for M = {}, config has {}", g.m, cfg.m)));
    }
    Ok(AmbiguityTable::new(g))
}

fn weighted_neighbourhood(
    grid: &OqamGrid,
    table: &AmbiguityTable,
    p: usize,
    q: usize,
) -> Result<Vec<((usize, usize), f64, Complex64)>> {
    if grid.m() != table.m() {
        return Err(Error::Dimension("grid and table disagree on M".into()));
    }
    if p >= grid.m() || q >= grid.cols() {
        return Err(Error::Dimension(format!("point ({p}, {q}) outside the grid")));
    }
    Ok(grid
        .neighbours(p, q)
        .into_iter()
        .map(|(m, n)| ((m, n), grid.get(m, n), table.inner_phased(grid.rule, m, n, p, q)))
        .collect())
}

/// Pseudo-pilot `c_{p,q} = a_{p,q} + sum_{Omega} a_{m,n} <g_{m,n}, g_{p,q}>`
/// over the first-order neighbourhood.
pub fn pseudo_pilot(grid: &OqamGrid, table: &AmbiguityTable, point: (usize, usize)) -> Result<Complex64> {
    let (p, q) = point;
    let hood = weighted_neighbourhood(grid, table, p, q)?;
    if !grid.is_known(p, q) {
        return Err(Error::Usage(format!("symbol at ({p}, {q}) is unknown")));
    }
    let mut c = Complex64::new(grid.get(p, q), 0.0);
    for ((m, n), a, w) in hood {
        if !grid.is_known(m, n) {
            return Err(Error::Usage(format!("neighbour ({m}, {n}) of ({p}, {q}) carries unknown data")));
        }
        c += w * a;
    }
    Ok(c)
}

/// Value of the help pilot at `helper` that cancels the interference at
/// `pilot` from the rest of its first-order neighbourhood.
pub fn help_pilot(
    grid: &OqamGrid,
    table: &AmbiguityTable,
    pilot: (usize, usize),
    helper: (usize, usize),
) -> Result<f64> {
    let (p, q) = pilot;
    let hood = weighted_neighbourhood(grid, table, p, q)?;
    let mut wh = None;
    let mut rest = ZERO;
    for (cell, a, w) in hood {
        if cell == helper {
            wh = Some(w);
        } else {
            rest += w * a;
        }
    }
    let wh = wh.ok_or_else(|| {
        Error::Usage(format!("helper {helper:?} is not a first-order neighbour of {pilot:?}"))
    })?;
    let wn = wh.norm_sqr();
    if wn < 1e-24 {
        return Err(Error::Singular(format!("helper {helper:?} has zero interference weight")));
    }
    let a = -(rest * wh.conj()).re / wn;
    let residual = (rest + wh * a).norm();
    if residual > 1e-9 * (1.0 + rest.norm()) {
        return Err(Error::Usage(format!(
            "interference at {pilot:?} is not collinear with the helper weight (residual {residual:.3e})"
        )));
    }
    Ok(a)
}

/// Flat-per-subcarrier receive model: `y_{p,q} = sum_{m,n} H_m a_{m,n} <g_{m,n}, g_{p,q}>`
/// summed over the whole grid (every order of interference).
pub fn flat_response(grid: &OqamGrid, table: &AmbiguityTable, cfr: &[Complex64], points: &[(usize, usize)]) -> Vec<Complex64> {
    let mut active = Vec::new();
    for n in 0..grid.cols() {
        for m in 0..grid.m() {
            let a = grid.get(m, n);
            if a != 0.0 {
                active.push((m, n, a));
            }
        }
    }
    points
        .iter()
        .map(|&(p, q)| {
            active
                .iter()
                .map(|&(m, n, a)| cfr[m] * a * table.inner_phased(grid.rule, m, n, p, q))
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_designs() {
        assert_eq!(PrototypeDesign::parse("default", 4).unwrap(), PrototypeDesign::Egf { alpha: DEFAULT_EGF_ALPHA });
        assert!(matches!(PrototypeDesign::parse("phydyas", 2).unwrap(), PrototypeDesign::FrequencySampling(_)));
        assert_eq!(PrototypeDesign::parse("egf:0.8", 3).unwrap(), PrototypeDesign::Egf { alpha: 0.8 });
        assert!(PrototypeDesign::parse("frequency-sampling", 5).is_err());
        assert!(PrototypeDesign::parse("nope", 4).is_err());
    }

    #[test]
    fn unsupported_k() {
        assert!(design_prototype(64, 0).is_err());
        assert!(design_prototype(64, 6).is_err());
    }

    #[test]
    fn single_symbol_is_the_pulse() {
        let g = design_prototype(16, 2).unwrap();
        let bank = FilterBank::new(&g);
        let mut grid = OqamGrid::new(16, 1, PhaseRule::Equal);
        grid.set(0, 0, 1.0);
        let s = bank.sfb(&grid).unwrap();
        for (a, b) in s.iter().zip(g.taps()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn afb_needs_samples() {
        let g = design_prototype(16, 2).unwrap();
        let bank = FilterBank::new(&g);
        let r = vec![ZERO; 20];
        assert!(bank.afb(&r, PhaseRule::Equal, &[(0, 0)]).is_err());
    }

    #[test]
    fn text_round_trip() {
        let g = design_prototype(32, 3).unwrap();
        let back = PrototypeFilter::from_text(&g.to_text(), 32).unwrap();
        assert_eq!(back.k(), 3);
        for (a, b) in back.taps().iter().zip(g.taps()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(PrototypeFilter::from_text("1\n2\nx\n", 2).is_err());
    }

    #[test]
    fn help_pilot_errors() {
        let g = design_prototype(16, 4).unwrap();
        let t = AmbiguityTable::new(&g);
        let grid = OqamGrid::new(16, 2, PhaseRule::Data);
        assert!(matches!(help_pilot(&grid, &t, (4, 0), (8, 1)), Err(Error::Usage(_))));
    }
}

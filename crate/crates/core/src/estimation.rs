//! Estimators: per-tone LS, pseudo-pilot division, DFT interpolation from
//! equispaced pilots and the time-domain projection of a full estimate.

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::oqam;
use crate::preamble::{Modems, Preamble, Scheme};
use crate::spectral::{dft_submatrix, Dft, IndexSet, SystemConfig};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Per-tone ratios used directly (full preamble).
    PerTone,
    /// Pilot ratios interpolated through an L_h-tap CIR.
    Interpolate,
    /// Full per-tone estimate projected onto L_h-tap CFRs.
    Project,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::PerTone => "per-tone",
            Method::Interpolate => "interpolate",
            Method::Project => "project",
        })
    }
}

/// OQAM divisor policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivisorMode {
    /// Divide by the transmitted pilot (sparse layouts).
    Plain,
    /// Divide by the pseudo-pilot `a + j sum a u` (full layouts).
    Pseudo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// `H_hat`, length M.
    pub cfr: Vec<Complex64>,
    /// `h_hat`, length L_h (empty for per-tone estimates).
    pub cir: Vec<Complex64>,
    pub method: Method,
}

/// Known divisors at the pilot tones of column 0.
pub fn divisors(p: &Preamble, modems: &Modems, mode: DivisorMode) -> Result<Vec<Complex64>> {
    let cfg = &modems.cfg;
    match p.scheme {
        Scheme::Qam => {
            if mode == DivisorMode::Pseudo {
                return Err(Error::Usage("pseudo-pilot division applies to OQAM only".into()));
            }
            Ok(p.pilot_values())
        }
        Scheme::Oqam => match mode {
            DivisorMode::Plain => {
                if p.pilots.len() * 2 > cfg.m {
                    return Err(Error::Usage(format!(
                        "plain division needs M/N >= 2, preamble has N = {} pilots",
                        p.pilots.len()
                    )));
                }
                Ok(p.pilots.as_slice().iter().map(|&k| Complex64::new(p.amplitude(k, 0), 0.0)).collect())
            }
            DivisorMode::Pseudo => {
                if !p.is_full() {
                    return Err(Error::Usage("pseudo-pilot division needs a full preamble".into()));
                }
                let grid = p.grid();
                let table = modems.bank.table();
                p.pilots.as_slice().iter().map(|&k| oqam::pseudo_pilot(&grid, table, (k, 0))).collect()
            }
        },
    }
}

/// `y_k / d_k`.
pub fn ratios(y: &[Complex64], d: &[Complex64]) -> Result<Vec<Complex64>> {
    if y.len() != d.len() {
        return Err(Error::Dimension(format!("{} observations for {} divisors", y.len(), d.len())));
    }
    y.iter()
        .zip(d)
        .enumerate()
        .map(|(i, (y, d))| {
            if d.norm_sqr() < 1e-300 {
                Err(Error::Singular(format!("zero divisor at pilot {i}")))
            } else {
                Ok(y / d)
            }
        })
        .collect()
}

/// Least-squares CIR fit from N >= L_h pilot estimates.
#[derive(Debug, Clone)]
pub struct Interpolator {
    m: usize,
    lh: usize,
    pilots: IndexSet,
    path: Path,
    dft_m: Dft,
}

#[derive(Debug, Clone)]
enum Path {
    Equispaced { i0: usize, dft_n: Dft },
    General { pinv: nalgebra::DMatrix<Complex64> },
}

impl Interpolator {
    /// Equispaced pilots only.
    pub fn new(cfg: &SystemConfig, pilots: &IndexSet) -> Result<Self> {
        Self::build(cfg, pilots, false)
    }

    /// Any pilot set with at least L_h tones, through the explicit pseudo-inverse.
    pub fn general(cfg: &SystemConfig, pilots: &IndexSet) -> Result<Self> {
        Self::build(cfg, pilots, true)
    }

    fn build(cfg: &SystemConfig, pilots: &IndexSet, allow_general: bool) -> Result<Self> {
        if pilots.modulus() != cfg.m {
            return Err(Error::Dimension(format!("pilot set modulus {} != M = {}", pilots.modulus(), cfg.m)));
        }
        if pilots.len() < cfg.lh {
            return Err(Error::Config(format!("{} pilots cannot resolve L_h = {} taps", pilots.len(), cfg.lh)));
        }
        let path = match (pilots.equispaced_params(), allow_general) {
            (Some((n, i0)), false) => Path::Equispaced { i0, dft_n: Dft::new(n) },
            (None, false) => {
                return Err(Error::Unsupported(format!("pilot set {pilots} is not equispaced")));
            }
            (_, true) => {
                let f = dft_submatrix(cfg.m, pilots, &IndexSet::range(cfg.m, 0, cfg.lh)?)?;
                let gram = f.adjoint() * &f;
                let inv = gram
                    .try_inverse()
                    .ok_or_else(|| Error::Singular("pilot DFT Gram matrix is singular".into()))?;
                Path::General { pinv: inv * f.adjoint() }
            }
        };
        Ok(Self { m: cfg.m, lh: cfg.lh, pilots: pilots.clone(), path, dft_m: Dft::new(cfg.m) })
    }

    pub fn pilots(&self) -> &IndexSet {
        &self.pilots
    }

    /// `h_hat` from the pilot estimates.
    pub fn cir(&self, raw: &[Complex64]) -> Result<Vec<Complex64>> {
        if raw.len() != self.pilots.len() {
            return Err(Error::Dimension(format!("{} estimates for {} pilots", raw.len(), self.pilots.len())));
        }
        match &self.path {
            Path::Equispaced { i0, dft_n } => {
                let n = raw.len();
                let mut buf = raw.to_vec();
                dft_n.inverse(&mut buf);
                Ok((0..self.lh)
                    .map(|l| {
                        buf[l] * crate::spectral::twiddle(-((i0 * l) as i64), self.m) / n as f64
                    })
                    .collect())
            }
            Path::General { pinv } => Ok((pinv * DVector::from_column_slice(raw)).iter().copied().collect()),
        }
    }

    pub fn estimate(&self, raw: &[Complex64]) -> Result<EstimationResult> {
        let cir = self.cir(raw)?;
        let cfr = cfr_of(&self.dft_m, &cir);
        Ok(EstimationResult { cfr, cir, method: Method::Interpolate })
    }
}

fn cfr_of(dft: &Dft, cir: &[Complex64]) -> Vec<Complex64> {
    let mut buf = vec![ZERO; dft.len()];
    buf[..cir.len()].copy_from_slice(cir);
    dft.forward(&mut buf);
    buf
}

/// `(1/M) F_{M x L_h} F_{M x L_h}^H`.
#[derive(Debug, Clone)]
pub struct Projector {
    m: usize,
    lh: usize,
    dft: Dft,
}

impl Projector {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self { m: cfg.m, lh: cfg.lh, dft: Dft::new(cfg.m) }
    }

    pub fn cir(&self, raw: &[Complex64]) -> Result<Vec<Complex64>> {
        if raw.len() != self.m {
            return Err(Error::Dimension(format!("projection needs M = {} tones, got {}", self.m, raw.len())));
        }
        let mut buf = raw.to_vec();
        self.dft.inverse(&mut buf);
        Ok(buf[..self.lh].iter().map(|z| z / self.m as f64).collect())
    }

    pub fn project(&self, raw: &[Complex64]) -> Result<EstimationResult> {
        let cir = self.cir(raw)?;
        Ok(EstimationResult { cfr: cfr_of(&self.dft, &cir), cir, method: Method::Project })
    }
}

/// Project a full per-tone estimate onto L_h-tap channels.
pub fn project_full(raw: &[Complex64], cfg: &SystemConfig) -> Result<EstimationResult> {
    Projector::new(cfg).project(raw)
}

/// Divide the observations at the pilot tones by the preamble's divisors
/// and interpolate (sparse) or keep per tone (full).
pub fn estimate_from_pilots(
    y: &[Complex64],
    p: &Preamble,
    modems: &Modems,
    mode: DivisorMode,
) -> Result<EstimationResult> {
    let raw = ratios(y, &divisors(p, modems, mode)?)?;
    if p.pilots.len() == modems.cfg.m {
        return Ok(EstimationResult { cfr: raw, cir: Vec::new(), method: Method::PerTone });
    }
    Interpolator::new(&modems.cfg, &p.pilots)?.estimate(&raw)
}

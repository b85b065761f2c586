//! Sample-spaced Rayleigh multipath channel (veh-A profile), propagation and AWGN.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{Dft, SystemConfig};

/// Continuous-time power-delay profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub delays_ns: Vec<f64>,
    pub powers_db: Vec<f64>,
}

impl PowerDelayProfile {
    /// ITU Vehicular A.
    pub fn veh_a() -> Self {
        Self {
            delays_ns: vec![0.0, 310.0, 710.0, 1090.0, 1730.0, 2510.0],
            powers_db: vec![0.0, -1.0, -9.0, -10.0, -15.0, -20.0],
        }
    }

    fn check(&self) -> Result<()> {
        if self.delays_ns.is_empty() || self.delays_ns.len() != self.powers_db.len() {
            return Err(Error::Config("profile needs matching nonempty delay/power lists".into()));
        }
        if self.delays_ns.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Config("profile delays must be finite and nonnegative".into()));
        }
        Ok(())
    }

    fn max_delay(&self) -> f64 {
        self.delays_ns.iter().cloned().fold(0.0, f64::max)
    }

    /// Sampling period used when none is configured: the last path lands on
    /// sample 28 (29 taps) for L_h >= 32, or on `floor(28 L_h / 32)` for
    /// shorter channels.
    pub fn default_sample_period_ns(&self, lh: usize) -> f64 {
        let last = if lh >= 32 { 28 } else { (28 * lh / 32).max(1) };
        let d = self.max_delay();
        if d == 0.0 {
            1.0
        } else {
            d / last as f64
        }
    }
}

/// Per-sample tap variances of a sample-spaced channel of length L_h.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub tap_powers: Vec<f64>,
    pub sample_period_ns: f64,
}

impl ChannelModel {
    /// Map each path to its nearest sample, add colliding powers, normalize to
    /// unit total power.
    pub fn new(profile: &PowerDelayProfile, lh: usize, sample_period_ns: Option<f64>) -> Result<Self> {
        profile.check()?;
        let ts = sample_period_ns.unwrap_or_else(|| profile.default_sample_period_ns(lh));
        if !(ts.is_finite() && ts > 0.0) {
            return Err(Error::Config(format!("sample period {ts} ns must be positive")));
        }
        let mut taps = vec![0.0; lh];
        for (&d, &p) in profile.delays_ns.iter().zip(&profile.powers_db) {
            let idx = (d / ts).round() as usize;
            if idx >= lh {
                return Err(Error::Config(format!(
                    "profile spans {} samples but L_h = {lh}",
                    idx + 1
                )));
            }
            taps[idx] += 10f64.powf(p / 10.0);
        }
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= total);
        Ok(Self { tap_powers: taps, sample_period_ns: ts })
    }

    pub fn veh_a(cfg: &SystemConfig) -> Result<Self> {
        Self::new(&PowerDelayProfile::veh_a(), cfg.lh, None)
    }

    pub fn lh(&self) -> usize {
        self.tap_powers.len()
    }

    /// Number of samples up to and including the last nonzero tap.
    pub fn occupied_taps(&self) -> usize {
        self.tap_powers.iter().rposition(|&p| p > 0.0).map_or(0, |i| i + 1)
    }

    /// Independent Rayleigh taps; deterministic given `seed`.
    pub fn draw(&self, seed: u64) -> ChannelRealization {
        let mut r = rng::rng(seed);
        let h = self
            .tap_powers
            .iter()
            .map(|&p| if p > 0.0 { rng::cn(&mut r, p) } else { Complex64::new(0.0, 0.0) })
            .collect();
        ChannelRealization { h }
    }
}

/// Sample-spaced CIR of length L_h (zero padded past the occupied taps).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Vec<Complex64>,
}

impl ChannelRealization {
    pub fn impulse(lh: usize) -> Self {
        let mut h = vec![Complex64::new(0.0, 0.0); lh];
        h[0] = Complex64::new(1.0, 0.0);
        Self { h }
    }

    pub fn energy(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Draw a veh-A realization for `cfg`.
pub fn gen_veh_a(seed: u64, cfg: &SystemConfig) -> Result<ChannelRealization> {
    Ok(ChannelModel::veh_a(cfg)?.draw(seed))
}

/// `H_m = sum_l h_l exp(-j 2 pi m l / M)`.
pub fn cfr_from_cir(h: &[Complex64], m: usize) -> Result<Vec<Complex64>> {
    if h.len() > m {
        return Err(Error::Dimension(format!("CIR length {} exceeds M = {m}", h.len())));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    buf[..h.len()].copy_from_slice(h);
    Dft::new(m).forward(&mut buf);
    Ok(buf)
}

/// Linear convolution, output length `s.len() + h.len() - 1`.
pub fn convolve(s: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    if s.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex64::new(0.0, 0.0); s.len() + h.len() - 1];
    for (k, &hk) in h.iter().enumerate() {
        if hk == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (i, &si) in s.iter().enumerate() {
            out[i + k] += si * hk;
        }
    }
    out
}

/// Pass `s` through `h` and add CN(0, sigma2) noise; deterministic given `seed`.
pub fn propagate(s: &[Complex64], h: &ChannelRealization, sigma2: f64, seed: u64) -> Result<Vec<Complex64>> {
    if s.is_empty() {
        return Err(Error::Dimension("empty transmit signal".into()));
    }
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Parameter(format!("noise variance {sigma2} must be >= 0")));
    }
    let mut out = convolve(s, &h.h);
    if sigma2 > 0.0 {
        let mut r = rng::rng(seed);
        for z in out.iter_mut() {
            *z += rng::cn(&mut r, sigma2);
        }
    }
    Ok(out)
}

/// Unit-variance noise vector of the length `propagate` would produce.
pub fn unit_noise(len: usize, seed: u64) -> Vec<Complex64> {
    let mut r = rng::rng(seed);
    rng::cn_vec(&mut r, len, 1.0)
}

/// Noise variance for a transmit bit SNR, QPSK (2 bits per symbol) with
/// per-subcarrier symbol energy `e_sym`.
pub fn noise_variance(ebn0_db: f64, e_sym: f64) -> f64 {
    e_sym / (2.0 * 10f64.powf(ebn0_db / 10.0))
}

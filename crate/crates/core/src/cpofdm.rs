//! CP-OFDM modulator/demodulator and per-tone LS estimation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{Dft, IndexSet, SystemConfig};

/// One CP-OFDM symbol: frequency-domain vector and its transmit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CpOfdmFrame {
    pub x: Vec<Complex64>,
    /// `[u[M-nu..M), u]` with `u = F^H x / sqrt(M)`.
    pub s: Vec<Complex64>,
}

impl CpOfdmFrame {
    pub fn energy(&self) -> f64 {
        self.s.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Energy spent on the CP samples.
    pub fn cp_energy(&self) -> f64 {
        let nu = self.s.len() - self.x.len();
        self.s[..nu].iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Modem with cached FFT plans.
#[derive(Debug, Clone)]
pub struct CpOfdm {
    cfg: SystemConfig,
    dft: Dft,
}

impl CpOfdm {
    pub fn new(cfg: &SystemConfig) -> Self {
        Self { cfg: *cfg, dft: Dft::new(cfg.m) }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn modulate(&self, x: &[Complex64]) -> Result<CpOfdmFrame> {
        let m = self.cfg.m;
        if x.len() != m {
            return Err(Error::Dimension(format!("preamble length {} != M = {m}", x.len())));
        }
        let mut u = x.to_vec();
        self.dft.inverse(&mut u);
        let scale = 1.0 / (m as f64).sqrt();
        u.iter_mut().for_each(|z| *z *= scale);
        let nu = self.cfg.nu();
        let mut s = Vec::with_capacity(m + nu);
        s.extend_from_slice(&u[m - nu..]);
        s.extend_from_slice(&u);
        Ok(CpOfdmFrame { x: x.to_vec(), s })
    }

    /// Drop the CP and apply `F / sqrt(M)` to the next M samples.
    pub fn demodulate(&self, r: &[Complex64]) -> Result<Vec<Complex64>> {
        let (m, nu) = (self.cfg.m, self.cfg.nu());
        if r.len() < m + nu {
            return Err(Error::Dimension(format!(
                "received {} samples, need at least M + nu = {}",
                r.len(),
                m + nu
            )));
        }
        let mut y = r[nu..nu + m].to_vec();
        self.dft.forward(&mut y);
        let scale = 1.0 / (m as f64).sqrt();
        y.iter_mut().for_each(|z| *z *= scale);
        Ok(y)
    }
}

pub fn modulate(x: &[Complex64], cfg: &SystemConfig) -> Result<CpOfdmFrame> {
    CpOfdm::new(cfg).modulate(x)
}

pub fn demodulate(r: &[Complex64], cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    CpOfdm::new(cfg).demodulate(r)
}

/// CP energy `(1/M) x^H F_{M x nu} F_{M x nu}^H x` of a frequency-domain vector.
pub fn cp_energy(x: &[Complex64], cfg: &SystemConfig) -> Result<f64> {
    Ok(modulate(x, cfg)?.cp_energy())
}

/// `y_m / x_m` on the requested tones.
pub fn ls_cfr(y: &[Complex64], x: &[Complex64], tones: &IndexSet) -> Result<Vec<Complex64>> {
    if y.len() != x.len() {
        return Err(Error::Dimension(format!("y has {} tones, x has {}", y.len(), x.len())));
    }
    tones
        .as_slice()
        .iter()
        .map(|&m| {
            if m >= x.len() {
                return Err(Error::Dimension(format!("tone {m} out of range")));
            }
            if x[m].norm_sqr() == 0.0 {
                return Err(Error::Usage(format!("LS estimate requested at null tone {m}")));
            }
            Ok(y[m] / x[m])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cp_copies_tail() {
        let cfg = SystemConfig::new(16, 4, 1, 1.0).unwrap();
        let x: Vec<Complex64> = (0..16).map(|i| Complex64::new(i as f64, -(i as f64) / 2.0)).collect();
        let f = modulate(&x, &cfg).unwrap();
        assert_eq!(f.s.len(), 19);
        for i in 0..3 {
            assert!((f.s[i] - f.s[16 + i]).norm() < 1e-12);
        }
    }

    #[test]
    fn ls_rejects_null_tone() {
        let x = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        let y = vec![Complex64::new(2.0, 0.0); 2];
        let tones = IndexSet::new(2, vec![1]).unwrap();
        assert!(matches!(ls_cfr(&y, &x, &tones), Err(Error::Usage(_))));
        let ok = ls_cfr(&y, &x, &IndexSet::new(2, vec![0]).unwrap()).unwrap();
        assert_eq!(ok, vec![Complex64::new(2.0, 0.0)]);
    }

    #[test]
    fn short_input_rejected() {
        let cfg = SystemConfig::new(16, 4, 1, 1.0).unwrap();
        assert!(demodulate(&vec![Complex64::new(0.0, 0.0); 18], &cfg).is_err());
        assert!(modulate(&vec![Complex64::new(0.0, 0.0); 15], &cfg).is_err());
    }
}

//! Monte Carlo NMSE-versus-Eb/N0 experiments, figure presets and CSV output.

use std::fmt::{self, Write as _};
use std::ops::Range;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;

use crate::analysis::{self, DispersiveKernels, WindowKernel};
use crate::channel::{self, ChannelModel, ChannelRealization, PowerDelayProfile};
use crate::error::{Error, Result};
use crate::estimation::{divisors, DivisorMode, Method};
use crate::oqam::{PrototypeDesign, PrototypeFilter};
use crate::preamble::{
    make_full_equal, make_sparse_data, make_sparse_equal, DataMapping, EnergyMode, Modems, Preamble, Scenario,
    Scheme,
};
use crate::rng;
use crate::spectral::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            _ => Err(Error::Config(format!("unknown scale '{s}' (desk, paper)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreambleKind {
    /// `pilots` equal equispaced pilots at offset 0.
    Sparse { pilots: usize },
    Full,
    SparseData(Scenario),
}

/// Standard setup observes the whole pulse; the truncated one transmits and
/// observes only the central `M + L_h - 1` span of each OQAM pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setup {
    Standard,
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub label: String,
    pub scheme: Scheme,
    pub kind: PreambleKind,
    pub method: Method,
    pub mode: DivisorMode,
    pub setup: Setup,
    /// Training budget as a multiple of `SystemConfig::energy`.
    pub energy_factor: f64,
    /// Curve whose per-sample training power this one is scaled to.
    pub equalize_to: Option<usize>,
}

impl CurveSpec {
    fn new(label: &str, scheme: Scheme, kind: PreambleKind, method: Method) -> Self {
        let mode = match (scheme, kind) {
            (Scheme::Oqam, PreambleKind::Full) => DivisorMode::Pseudo,
            _ => DivisorMode::Plain,
        };
        Self {
            label: label.into(),
            scheme,
            kind,
            method,
            mode,
            setup: Setup::Standard,
            energy_factor: 1.0,
            equalize_to: None,
        }
    }

    fn equalized(mut self, to: usize) -> Self {
        self.equalize_to = Some(to);
        self
    }

    fn truncated(mut self) -> Self {
        self.setup = Setup::Truncated;
        self
    }

    fn energy(mut self, f: f64) -> Self {
        self.energy_factor = f;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: String,
    pub config: SystemConfig,
    pub prototype: PrototypeDesign,
    /// Explicit taps (overrides `prototype`).
    pub prototype_taps: Option<Vec<f64>>,
    pub profile: PowerDelayProfile,
    pub sample_period_ns: Option<f64>,
    pub mapping: DataMapping,
    pub curves: Vec<CurveSpec>,
    pub ebn0_db: Vec<f64>,
    pub n_channels: usize,
    pub n_noise: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.n_channels == 0 || self.n_noise == 0 {
            return Err(Error::Config("need at least one channel and one noise realization".into()));
        }
        if self.ebn0_db.is_empty() || self.ebn0_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("Eb/N0 grid must be nonempty and finite".into()));
        }
        if self.curves.is_empty() {
            return Err(Error::Config("no curves to run".into()));
        }
        for (i, c) in self.curves.iter().enumerate() {
            if let Some(r) = c.equalize_to {
                if r >= i {
                    return Err(Error::Config(format!("curve '{}' equalizes to a later curve", c.label)));
                }
            }
            if !(c.energy_factor > 0.0) {
                return Err(Error::Config(format!("curve '{}' has a nonpositive budget", c.label)));
            }
        }
        Ok(())
    }

    pub fn modems(&self) -> Result<Modems> {
        let proto = match &self.prototype_taps {
            Some(t) => PrototypeFilter::from_coefficients(self.config.m, self.config.k, t.clone())?,
            None => PrototypeFilter::design(self.config.m, self.config.k, &self.prototype)?,
        };
        Modems::with_prototype(&self.config, &proto)
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        ChannelModel::new(&self.profile, self.config.lh, self.sample_period_ns)
    }
}

pub const PRESETS: [&str; 13] = [
    "fig1a", "fig1b", "fig2a", "fig2b", "fig3", "fig4a", "fig4b", "fig5", "fig6", "fig7a", "fig7b", "fig8a", "fig8b",
];

/// Figure setup at the given scale.
pub fn preset(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    use PreambleKind::*;
    use Scheme::*;
    let (m_paper, k) = match name {
        "fig7a" => (512, 3),
        "fig8a" => (512, 2),
        _ if PRESETS.contains(&name) => (1024, 4),
        _ => return Err(Error::Config(format!("unknown preset '{name}'"))),
    };
    let (m, lh, n_channels, n_noise) = match scale {
        Scale::Paper => (m_paper, 32, 200, 300),
        Scale::Desk => (128, 8, 50, 100),
    };
    let sparse = Sparse { pilots: lh };
    let double = Sparse { pilots: 2 * lh };
    let sl = format!("sparse{lh}");
    let dl = format!("sparse{}", 2 * lh);
    let curves = match name {
        "fig1a" => vec![
            CurveSpec::new("full", Qam, Full, Method::PerTone),
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate).equalized(0),
        ],
        "fig1b" => vec![
            CurveSpec::new("full-projected", Qam, Full, Method::Project),
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate).equalized(0),
        ],
        "fig2a" => vec![
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate),
            CurveSpec::new(&format!("{dl}-unequalized"), Qam, double, Method::Interpolate).energy(2.0),
        ],
        "fig2b" => vec![
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate),
            CurveSpec::new(&dl, Qam, double, Method::Interpolate).energy(2.0).equalized(0),
        ],
        "fig3" => vec![
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate),
            CurveSpec::new("sd", Qam, SparseData(Scenario::QamSd), Method::Interpolate).equalized(0),
        ],
        "fig4a" => vec![
            CurveSpec::new("full", Oqam, Full, Method::PerTone),
            CurveSpec::new(&sl, Oqam, sparse, Method::Interpolate).equalized(0),
        ],
        "fig4b" => vec![
            CurveSpec::new("full-projected", Oqam, Full, Method::Project),
            CurveSpec::new(&sl, Oqam, sparse, Method::Interpolate).equalized(0),
        ],
        "fig5" => vec![
            CurveSpec::new(&sl, Oqam, sparse, Method::Interpolate),
            CurveSpec::new(&dl, Oqam, double, Method::Interpolate).energy(2.0).equalized(0),
            CurveSpec::new(&format!("{dl}-unequalized"), Oqam, double, Method::Interpolate).energy(2.0),
        ],
        "fig6" => vec![
            CurveSpec::new(&sl, Oqam, sparse, Method::Interpolate),
            CurveSpec::new("sd3", Oqam, SparseData(Scenario::Oqam3), Method::Interpolate).equalized(0),
        ],
        "fig7a" | "fig7b" => vec![
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate),
            CurveSpec::new(&sl, Oqam, sparse, Method::Interpolate).equalized(0),
        ],
        _ => vec![
            CurveSpec::new(&sl, Qam, sparse, Method::Interpolate),
            CurveSpec::new(&format!("{sl}-truncated"), Oqam, sparse, Method::Interpolate).truncated().equalized(0),
        ],
    };
    Ok(ExperimentConfig {
        preset: name.into(),
        config: SystemConfig::new(m, lh, k, 1.0)?,
        prototype: PrototypeDesign::default_for(k)?,
        prototype_taps: None,
        profile: PowerDelayProfile::veh_a(),
        sample_period_ns: None,
        mapping: DataMapping::QpskComponent,
        curves,
        ebn0_db: (0..=8).map(|i| 5.0 * i as f64).collect(),
        n_channels,
        n_noise,
        seed: 0,
        out: None,
    })
}

/// Overrides read from a TOML file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub scale: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub system: Option<SystemSection>,
    pub run: Option<RunSection>,
    pub prototype: Option<PrototypeSection>,
    pub channel: Option<ChannelSection>,
    pub data: Option<DataSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub m: Option<usize>,
    pub lh: Option<usize>,
    pub k: Option<usize>,
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub n_channels: Option<usize>,
    pub n_noise: Option<usize>,
    pub ebn0_db: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeSection {
    /// "default", "frequency-sampling", "egf", "egf:<alpha>".
    pub design: Option<String>,
    /// Text file with one tap per line.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub delays_ns: Option<Vec<f64>>,
    pub powers_db: Option<Vec<f64>>,
    pub sample_period_ns: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "qpsk-component" or "pilot-amplitude".
    pub mapping: Option<String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Apply the overrides on top of `cfg`. Curve layouts follow the preset;
    /// sizes follow the overridden system.
    pub fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        if let Some(sys) = &self.system {
            let c = &mut cfg.config;
            let old_lh = c.lh;
            *c = SystemConfig::new(
                sys.m.unwrap_or(c.m),
                sys.lh.unwrap_or(c.lh),
                sys.k.unwrap_or(c.k),
                sys.energy.unwrap_or(c.energy),
            )?;
            if c.lh != old_lh {
                let lh = c.lh;
                for curve in &mut cfg.curves {
                    if let PreambleKind::Sparse { pilots } = &mut curve.kind {
                        let ratio = *pilots / old_lh;
                        *pilots = ratio * lh;
                        curve.label = curve.label.replacen(&format!("sparse{}", ratio * old_lh), &format!("sparse{pilots}"), 1);
                    }
                }
            }
            if sys.k.is_some() {
                cfg.prototype = PrototypeDesign::default_for(cfg.config.k)?;
            }
        }
        if let Some(run) = &self.run {
            if let Some(n) = run.n_channels {
                cfg.n_channels = n;
            }
            if let Some(n) = run.n_noise {
                cfg.n_noise = n;
            }
            if let Some(g) = &run.ebn0_db {
                cfg.ebn0_db = g.clone();
            }
        }
        if let Some(p) = &self.prototype {
            if let Some(d) = &p.design {
                cfg.prototype = PrototypeDesign::parse(d, cfg.config.k)?;
            }
            if let Some(f) = &p.file {
                let taps = PrototypeFilter::from_text(&std::fs::read_to_string(f)?, cfg.config.m)?;
                if taps.k() != cfg.config.k {
                    return Err(Error::Config(format!("prototype file has K = {}, system has {}", taps.k(), cfg.config.k)));
                }
                cfg.prototype_taps = Some(taps.taps().to_vec());
            }
        }
        if let Some(ch) = &self.channel {
            if let Some(d) = &ch.delays_ns {
                cfg.profile.delays_ns = d.clone();
            }
            if let Some(p) = &ch.powers_db {
                cfg.profile.powers_db = p.clone();
            }
            if ch.sample_period_ns.is_some() {
                cfg.sample_period_ns = ch.sample_period_ns;
            }
        }
        if let Some(d) = &self.data {
            if let Some(m) = &d.mapping {
                cfg.mapping = match m.as_str() {
                    "qpsk-component" => DataMapping::QpskComponent,
                    "pilot-amplitude" => DataMapping::PilotAmplitude,
                    _ => return Err(Error::Config(format!("unknown data mapping '{m}'"))),
                };
            }
        }
        cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsePoint {
    pub ebn0_db: f64,
    pub nmse: f64,
    /// Closed-form NMSE (exact noise trace plus flat-model floor).
    pub predicted: f64,
    pub floor: f64,
    /// Standard error of `nmse` over channel realizations.
    pub stderr: f64,
    pub n_samples: usize,
}

impl MsePoint {
    pub fn nmse_db(&self) -> f64 {
        10.0 * self.nmse.log10()
    }

    pub fn stderr_db(&self) -> f64 {
        10.0 / std::f64::consts::LN_10 * self.stderr / self.nmse
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCurve {
    pub preset: String,
    pub scheme: Scheme,
    pub preamble: String,
    /// Amplitude factor applied by power equalization.
    pub scale: f64,
    pub points: Vec<MsePoint>,
}

impl MseCurve {
    pub fn at(&self, ebn0_db: f64) -> Option<&MsePoint> {
        self.points.iter().find(|p| p.ebn0_db == ebn0_db)
    }
}

/// Noise-free inputs of one curve: everything the receiver needs.
struct Prepared {
    spec: CurveSpec,
    scale: f64,
    /// Pulse range used by the OQAM receiver (and transmitter when truncated).
    window: Range<usize>,
    /// Divisor correction for the truncated pulse.
    gain: f64,
    /// `E||H_hat - H||^2 / sigma^2` through the linear receiver.
    noise_trace: f64,
    kernels: DispersiveKernels,
}

fn build(cfg: &ExperimentConfig, modems: &Modems, spec: &CurveSpec, data_seed: u64) -> Result<Preamble> {
    let e = cfg.config.energy * spec.energy_factor;
    match spec.kind {
        PreambleKind::Sparse { pilots } => make_sparse_equal(modems, spec.scheme, pilots, 0, e),
        PreambleKind::Full => make_full_equal(modems, spec.scheme, e, EnergyMode::Antenna),
        PreambleKind::SparseData(s) => {
            if s.scheme() != spec.scheme {
                return Err(Error::Config(format!("scenario {} does not belong to {}", s.name(), spec.scheme)));
            }
            make_sparse_data(modems, s, 0, e, data_seed, cfg.mapping)
        }
    }
}

/// Training energy and window as counted by the TPR of this curve.
fn tpr_terms(p: &Preamble, modems: &Modems, prep_window: &Range<usize>, setup: Setup) -> Result<(f64, usize)> {
    match (p.scheme, setup) {
        (Scheme::Oqam, Setup::Truncated) => {
            let s = modems.bank.sfb_window(&p.training_only().grid(), prep_window.clone())?;
            Ok((s.iter().map(|z| z.norm_sqr()).sum(), prep_window.len()))
        }
        _ => Ok((analysis::expected_antenna_energy(p, modems)?, p.window(&modems.cfg))),
    }
}

fn prepare(cfg: &ExperimentConfig, modems: &Modems) -> Result<Vec<Prepared>> {
    let c = &cfg.config;
    let mut out: Vec<Prepared> = Vec::new();
    let mut refs: Vec<(Preamble, f64, usize)> = Vec::new();
    for spec in &cfg.curves {
        let base = build(cfg, modems, spec, 0)?;
        let (window, gain) = match (spec.scheme, spec.setup) {
            (Scheme::Oqam, Setup::Truncated) => {
                let w = modems.bank.prototype().central_window(c.m + c.lh - 1);
                let k0 = WindowKernel::new(modems.bank.prototype(), w.clone()).get(0).re;
                (w, k0)
            }
            _ => (0..c.lg(), 1.0),
        };
        let (e, r) = tpr_terms(&base, modems, &window, spec.setup)?;
        let scale = match spec.equalize_to {
            Some(i) => {
                let (rp, re, rr) = &refs[i];
                analysis::tpr_from(rp, &base, *re, e, *rr, r)?.scale()
            }
            None => 1.0,
        };
        let p = base.scaled(scale);
        let base_cols = p.cols();
        let d: Vec<Complex64> = divisors(&p, modems, spec.mode)?.into_iter().map(|z| z * gain).collect();
        let cov = match spec.setup {
            Setup::Truncated => analysis::pilot_noise_cov(&p, modems, Some(window.clone())),
            Setup::Standard => analysis::pilot_noise_cov(&p, modems, None),
        };
        let noise_trace = analysis::noise_mse(spec.method, &p.pilots, &d, &cov, c)?;
        refs.push((p, e * scale * scale, r));
        let tx = match spec.setup {
            Setup::Truncated => window.clone(),
            Setup::Standard => 0..c.lg(),
        };
        let kernels = DispersiveKernels::new(modems.bank.prototype(), c.lh, base_cols, tx, window.clone());
        out.push(Prepared { spec: spec.clone(), scale, window, gain, noise_trace, kernels });
    }
    Ok(out)
}

/// Linear receiver: samples in, CFR estimate out.
fn receive(
    r: &[Complex64],
    p: &Preamble,
    d: &[Complex64],
    prep: &Prepared,
    modems: &Modems,
) -> Result<Vec<Complex64>> {
    let cfg = &modems.cfg;
    let y: Vec<Complex64> = match p.scheme {
        Scheme::Qam => modems.ofdm.demodulate(r)?,
        Scheme::Oqam => modems.bank.afb_column(r, 0, p.rule, prep.window.clone())?,
    };
    let raw: Vec<Complex64> = p.pilots.as_slice().iter().zip(d).map(|(&k, d)| y[k] / d).collect();
    analysis::apply(prep.spec.method, &raw, &p.pilots, cfg)
}

/// Pairwise sum (order fixed by the slice, independent of scheduling).
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Per-channel results: for each curve, NMSE per Eb/N0, floor / ||H||^2,
/// and 1 / ||H||^2.
struct ChannelOutcome {
    nmse: Vec<Vec<f64>>,
    floor: Vec<f64>,
    inv_energy: f64,
}

fn run_channel(
    cfg: &ExperimentConfig,
    modems: &Modems,
    preps: &[Prepared],
    h: &ChannelRealization,
    ch: usize,
    sigmas: &[f64],
) -> Result<ChannelOutcome> {
    let c = &cfg.config;
    let cfr = channel::cfr_from_cir(&h.h, c.m)?;
    let hn = cfr.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let mut nmse = Vec::with_capacity(preps.len());
    let mut floor = Vec::with_capacity(preps.len());
    for (ci, prep) in preps.iter().enumerate() {
        let data_seed = rng::derive(cfg.seed, &[2, ch as u64, ci as u64]);
        let p = build(cfg, modems, &prep.spec, data_seed)?.scaled(prep.scale);
        let d: Vec<Complex64> = divisors(&p, modems, prep.spec.mode)?.into_iter().map(|z| z * prep.gain).collect();
        let tx = match (p.scheme, prep.spec.setup) {
            (Scheme::Oqam, Setup::Truncated) => modems.bank.sfb_window(&p.grid(), prep.window.clone())?,
            _ => modems.transmit(&p)?,
        };
        let r0 = channel::convolve(&tx, &h.h);
        let sig = receive(&r0, &p, &d, prep, modems)?;
        let bias: Vec<Complex64> = sig.iter().zip(&cfr).map(|(a, b)| a - b).collect();
        let mut acc = vec![0.0; sigmas.len()];
        for j in 0..cfg.n_noise {
            let w = channel::unit_noise(r0.len(), rng::derive(cfg.seed, &[3, ch as u64, j as u64]));
            let e = receive(&w, &p, &d, prep, modems)?;
            for (a, &s) in acc.iter_mut().zip(sigmas) {
                *a += bias.iter().zip(&e).map(|(b, e)| (b + e * s).norm_sqr()).sum::<f64>();
            }
        }
        nmse.push(acc.into_iter().map(|a| a / (cfg.n_noise as f64 * hn)).collect());
        let fl = analysis::floor_with(&p, modems, &prep.kernels, h, prep.spec.method, prep.spec.mode, prep.gain)?.floor;
        floor.push(fl / hn);
    }
    Ok(ChannelOutcome { nmse, floor, inv_energy: 1.0 / hn })
}

/// Run every curve of `cfg`. Deterministic given `cfg.seed`, whatever the
/// number of worker threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MseCurve>> {
    cfg.validate()?;
    let modems = cfg.modems()?;
    let model = cfg.channel_model()?;
    let preps = prepare(cfg, &modems)?;
    // sigma^2 from the per-subcarrier energy of the reference full preamble
    let e_sym = cfg.config.energy / cfg.config.m as f64;
    let sigmas: Vec<f64> = cfg.ebn0_db.iter().map(|&x| channel::noise_variance(x, e_sym).sqrt()).collect();

    let outcomes: Vec<ChannelOutcome> = (0..cfg.n_channels)
        .into_par_iter()
        .map(|ch| {
            let h = model.draw(rng::derive(cfg.seed, &[1, ch as u64]));
            run_channel(cfg, &modems, &preps, &h, ch, &sigmas)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = cfg.n_channels as f64;
    let inv_e = pairwise_sum(&outcomes.iter().map(|o| o.inv_energy).collect::<Vec<_>>()) / n;
    let mut curves = Vec::with_capacity(preps.len());
    for (ci, prep) in preps.iter().enumerate() {
        let floor = pairwise_sum(&outcomes.iter().map(|o| o.floor[ci]).collect::<Vec<_>>()) / n;
        let points = sigmas
            .iter()
            .zip(&cfg.ebn0_db)
            .enumerate()
            .map(|(si, (&s, &x))| {
                let vals: Vec<f64> = outcomes.iter().map(|o| o.nmse[ci][si]).collect();
                let mean = pairwise_sum(&vals) / n;
                let var = if cfg.n_channels > 1 {
                    pairwise_sum(&vals.iter().map(|v| (v - mean).powi(2)).collect::<Vec<_>>()) / (n - 1.0)
                } else {
                    0.0
                };
                MsePoint {
                    ebn0_db: x,
                    nmse: mean,
                    predicted: s * s * prep.noise_trace * inv_e + floor,
                    floor,
                    stderr: (var / n).sqrt(),
                    n_samples: cfg.n_channels * cfg.n_noise,
                }
            })
            .collect();
        curves.push(MseCurve {
            preset: cfg.preset.clone(),
            scheme: prep.spec.scheme,
            preamble: prep.spec.label.clone(),
            scale: prep.scale,
            points,
        });
    }
    Ok(curves)
}

fn fmt_db(v: f64) -> String {
    if v > 0.0 {
        format!("{:.6}", 10.0 * v.log10())
    } else {
        "-inf".into()
    }
}

pub const CSV_HEADER: &str = "preset,scheme,preamble,ebn0_db,nmse_db,nmse_linear,predicted_db,floor_db,stderr_db,n_samples";

pub fn to_csv(curves: &[MseCurve]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for c in curves {
        for p in &c.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.9e},{},{},{:.6},{}",
                c.preset,
                c.scheme,
                c.preamble,
                p.ebn0_db,
                fmt_db(p.nmse),
                p.nmse,
                fmt_db(p.predicted),
                fmt_db(p.floor),
                p.stderr_db(),
                p.n_samples
            );
        }
    }
    s
}

pub fn write_csv(curves: &[MseCurve], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, to_csv(curves))?;
    Ok(())
}

/// Gap `curve[a] - curve[b]` in dB at each grid point.
pub fn gaps_db(curves: &[MseCurve], a: usize, b: usize) -> Vec<f64> {
    curves[a].points.iter().zip(&curves[b].points).map(|(x, y)| x.nmse_db() - y.nmse_db()).collect()
}

impl fmt::Display for MseCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}:", self.preset, self.scheme, self.preamble)?;
        for p in &self.points {
            write!(f, " {:.0}dB={:.2}", p.ebn0_db, p.nmse_db())?;
        }
        Ok(())
    }
}

//! Preamble families for both systems: full, sparse (L_h or P pilots),
//! sparse-data scenarios and the two-column equipowered full CP-OFDM vector.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::cpofdm::CpOfdm;
use crate::error::{Error, Result};
use crate::oqam::{self, FilterBank, OqamGrid, PhaseRule, PrototypeFilter};
use crate::rng;
use crate::spectral::{equispaced_set, IndexSet, SystemConfig};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Qam,
    Oqam,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Qam => "qam",
            Scheme::Oqam => "oqam",
        })
    }
}

/// Sparse-data variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// CP-OFDM: data of the pilot modulus on every inactive tone.
    QamSd,
    /// Data on every non-pilot tone of the preamble vector, zero side vector.
    Oqam1a,
    /// As 1a with zero guards at `p +- 1` (needs M/L_h >= 4).
    Oqam1b,
    /// Guards at `p +- 1`, side vector with data and a help pilot at `(p, 1)`.
    Oqam2,
    /// As 2 without the guards.
    Oqam3,
}

impl Scenario {
    pub fn scheme(self) -> Scheme {
        match self {
            Scenario::QamSd => Scheme::Qam,
            _ => Scheme::Oqam,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::QamSd => "sd",
            Scenario::Oqam1a => "sd1a",
            Scenario::Oqam1b => "sd1b",
            Scenario::Oqam2 => "sd2",
            Scenario::Oqam3 => "sd3",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sd" | "qam-sd" => Scenario::QamSd,
            "sd1a" | "oqam-1a" => Scenario::Oqam1a,
            "sd1b" | "oqam-1b" => Scenario::Oqam1b,
            "sd2" | "oqam-2" => Scenario::Oqam2,
            "sd3" | "oqam-3" => Scenario::Oqam3,
            _ => return Err(Error::Parse(format!("unknown sparse-data scenario '{s}'"))),
        })
    }

    fn has_side_data(self) -> bool {
        matches!(self, Scenario::Oqam2 | Scenario::Oqam3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Full,
    Sparse { n: usize, i0: usize },
    SparseData { scenario: Scenario, i0: usize },
}

/// How the budget `E` is accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMode {
    /// Energy at the transmit antenna (SFB output, CP included).
    Antenna,
    /// `||x||^2` at the SFB input.
    SfbInput,
}

/// Real OQAM data amplitude in sparse-data preambles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DataMapping {
    /// QPSK symbol of the pilot modulus split into its two real OQAM
    /// components: amplitude `sqrt(E_x / 2)`.
    #[default]
    QpskComponent,
    /// Real amplitude equal to the pilot amplitude `sqrt(E_x)`.
    PilotAmplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellRole {
    Pilot,
    Zero,
    Data,
    Help,
}

/// CP-OFDM modem and OQAM filter bank for one configuration.
#[derive(Debug, Clone)]
pub struct Modems {
    pub cfg: SystemConfig,
    pub ofdm: CpOfdm,
    pub bank: FilterBank,
}

impl Modems {
    /// Uses the default prototype for `cfg.k`.
    pub fn new(cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        Self::with_prototype(cfg, &oqam::design_prototype(cfg.m, cfg.k)?)
    }

    pub fn with_prototype(cfg: &SystemConfig, proto: &PrototypeFilter) -> Result<Self> {
        cfg.validate()?;
        if proto.m() != cfg.m || proto.k() != cfg.k {
            return Err(Error::Config(format!(
                "prototype is (M = {}, K = {}), config is (M = {}, K = {})",
                proto.m(),
                proto.k(),
                cfg.m,
                cfg.k
            )));
        }
        Ok(Self { cfg: *cfg, ofdm: CpOfdm::new(cfg), bank: FilterBank::new(proto) })
    }

    pub fn beta(&self) -> f64 {
        self.bank.table().beta
    }

    /// Transmit samples of the whole preamble (data included).
    pub fn transmit(&self, p: &Preamble) -> Result<Vec<Complex64>> {
        self.check(p)?;
        match p.scheme {
            Scheme::Qam => Ok(self.ofdm.modulate(p.column(0))?.s),
            Scheme::Oqam => self.bank.sfb(&p.grid()),
        }
    }

    fn check(&self, p: &Preamble) -> Result<()> {
        if p.m != self.cfg.m {
            return Err(Error::Dimension(format!("preamble has M = {}, modems have {}", p.m, self.cfg.m)));
        }
        Ok(())
    }
}

/// Training structure with its symbols on a `cols x M` grid (QAM: one column).
#[derive(Debug, Clone, PartialEq)]
pub struct Preamble {
    pub scheme: Scheme,
    pub layout: Layout,
    pub energy_mode: EnergyMode,
    /// Declared training budget.
    pub budget: f64,
    /// Pilot tones of the preamble vector (column 0).
    pub pilots: IndexSet,
    pub rule: PhaseRule,
    m: usize,
    cols: usize,
    symbols: Vec<Complex64>,
    roles: Vec<CellRole>,
}

impl Preamble {
    fn blank(scheme: Scheme, layout: Layout, mode: EnergyMode, budget: f64, pilots: IndexSet, rule: PhaseRule) -> Self {
        let m = pilots.modulus();
        let cols = match scheme {
            Scheme::Qam => 1,
            Scheme::Oqam => 2,
        };
        Self {
            scheme,
            layout,
            energy_mode: mode,
            budget,
            pilots,
            rule,
            m,
            cols,
            symbols: vec![ZERO; m * cols],
            roles: vec![CellRole::Zero; m * cols],
        }
    }

    fn put(&mut self, m: usize, n: usize, x: Complex64, role: CellRole) {
        self.symbols[n * self.m + m] = x;
        self.roles[n * self.m + m] = role;
    }

    fn put_real(&mut self, m: usize, n: usize, a: f64, role: CellRole) {
        let x = self.rule.phasor(m, n) * a;
        self.put(m, n, x, role);
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn symbol(&self, m: usize, n: usize) -> Complex64 {
        self.symbols[n * self.m + m]
    }

    pub fn role(&self, m: usize, n: usize) -> CellRole {
        self.roles[n * self.m + m]
    }

    /// Frequency-domain symbols of column `n`.
    pub fn column(&self, n: usize) -> &[Complex64] {
        &self.symbols[n * self.m..(n + 1) * self.m]
    }

    pub fn is_full(&self) -> bool {
        matches!(self.layout, Layout::Full)
    }

    pub fn scenario(&self) -> Option<Scenario> {
        match self.layout {
            Layout::SparseData { scenario, .. } => Some(scenario),
            _ => None,
        }
    }

    /// Real OQAM amplitude `a = x exp(-j phi)`.
    pub fn amplitude(&self, m: usize, n: usize) -> f64 {
        (self.symbol(m, n) * self.rule.phasor(m, n).conj()).re
    }

    /// Pilot symbols `x_p`, `p` in `pilots`.
    pub fn pilot_values(&self) -> Vec<Complex64> {
        self.pilots.as_slice().iter().map(|&p| self.symbol(p, 0)).collect()
    }

    /// OQAM grid; data cells are flagged unknown.
    pub fn grid(&self) -> OqamGrid {
        let mut g = OqamGrid::new(self.m, self.cols, self.rule);
        for n in 0..self.cols {
            for m in 0..self.m {
                let a = self.amplitude(m, n);
                match self.role(m, n) {
                    CellRole::Data => g.set_unknown(m, n, a),
                    _ => g.set(m, n, a),
                }
            }
        }
        g
    }

    /// Copy with every data cell set to zero.
    pub fn training_only(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.symbols.len() {
            if out.roles[i] == CellRole::Data {
                out.symbols[i] = ZERO;
            }
        }
        out
    }

    pub fn data_cells(&self) -> Vec<(usize, usize)> {
        self.cells_with(CellRole::Data)
    }

    pub fn help_cells(&self) -> Vec<(usize, usize)> {
        self.cells_with(CellRole::Help)
    }

    fn cells_with(&self, role: CellRole) -> Vec<(usize, usize)> {
        (0..self.cols)
            .flat_map(|n| (0..self.m).map(move |m| (m, n)))
            .filter(|&(m, n)| self.role(m, n) == role)
            .collect()
    }

    /// Per-realization training-energy observation window (samples).
    pub fn window(&self, cfg: &SystemConfig) -> usize {
        match self.scheme {
            Scheme::Qam => cfg.m + cfg.nu(),
            Scheme::Oqam => match self.scenario() {
                Some(s) if s.has_side_data() => cfg.lg() + cfg.m / 2,
                _ => cfg.lg(),
            },
        }
    }

    /// Scale every symbol (pilots, help pilots and data alike).
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.symbols.iter_mut().for_each(|z| *z *= s);
        out.budget *= s * s;
        out
    }

    /// Label used in CSV output.
    pub fn label(&self) -> String {
        match self.layout {
            Layout::Full => "full".into(),
            Layout::Sparse { n, .. } => format!("sparse{n}"),
            Layout::SparseData { scenario, .. } => scenario.name().into(),
        }
    }

    /// `index,re,im` rows with `index = n M + m`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,re,im\n");
        for (i, z) in self.symbols.iter().enumerate() {
            s.push_str(&format!("{i},{:.17e},{:.17e}\n", z.re, z.im));
        }
        s
    }
}

/// Parse the `index,re,im` form back into `(index, value)` pairs.
pub fn parse_csv(text: &str) -> Result<Vec<(usize, Complex64)>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || (ln == 0 && t.starts_with("index")) {
            continue;
        }
        let f: Vec<&str> = t.split(',').collect();
        if f.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", ln + 1)));
        }
        let bad = |_| Error::Parse(format!("line {}: '{t}'", ln + 1));
        let i: usize = f[0].trim().parse().map_err(|_| Error::Parse(format!("line {}: '{t}'", ln + 1)))?;
        let re: f64 = f[1].trim().parse().map_err(bad)?;
        let im: f64 = f[2].trim().parse().map_err(bad)?;
        out.push((i, Complex64::new(re, im)));
    }
    Ok(out)
}

fn check_budget(e: f64) -> Result<()> {
    if !(e.is_finite() && e > 0.0) {
        return Err(Error::Parameter(format!("training budget {e} must be positive")));
    }
    Ok(())
}

/// `n` equal pilots of magnitude `sqrt(E/n)` on `{i0 + k M/n}`.
pub fn make_sparse_equal(modems: &Modems, scheme: Scheme, n: usize, i0: usize, e: f64) -> Result<Preamble> {
    check_budget(e)?;
    let cfg = &modems.cfg;
    if n == 0 || n >= cfg.m || cfg.m % n != 0 || cfg.m / n < 2 {
        return Err(Error::Config(format!("N = {n} is not a sparse layout for M = {} (need M/N >= 2 integer)", cfg.m)));
    }
    if n < cfg.lh {
        return Err(Error::Config(format!("N = {n} pilots cannot resolve L_h = {} taps", cfg.lh)));
    }
    let pilots = equispaced_set(cfg.m, n, i0)?;
    let amp = (e / n as f64).sqrt();
    let mut p = Preamble::blank(scheme, Layout::Sparse { n, i0 }, EnergyMode::Antenna, e, pilots.clone(), PhaseRule::Equal);
    for &k in pilots.as_slice() {
        p.put_real(k, 0, amp, CellRole::Pilot);
    }
    Ok(p)
}

/// `M` equal pilots. OQAM antenna mode is normalized by the exact SFB energy
/// of the unit all-equal vector.
pub fn make_full_equal(modems: &Modems, scheme: Scheme, e: f64, mode: EnergyMode) -> Result<Preamble> {
    check_budget(e)?;
    let cfg = &modems.cfg;
    let pilots = IndexSet::full(cfg.m);
    let amp = match (scheme, mode) {
        (Scheme::Oqam, EnergyMode::Antenna) => {
            let mut unit = OqamGrid::new(cfg.m, 1, PhaseRule::Equal);
            (0..cfg.m).for_each(|k| unit.set(k, 0, 1.0));
            let e1: f64 = modems.bank.sfb(&unit)?.iter().map(|z| z.norm_sqr()).sum();
            (e / e1).sqrt()
        }
        _ => (e / cfg.m as f64).sqrt(),
    };
    let mut p = Preamble::blank(scheme, Layout::Full, mode, e, pilots, PhaseRule::Equal);
    for k in 0..cfg.m {
        p.put_real(k, 0, amp, CellRole::Pilot);
    }
    Ok(p)
}

/// Full CP-OFDM preamble `x = alpha_k f_k + alpha_l f_l` built from two DFT
/// columns `M/2` apart; `sign` picks `theta + pi/2` (`+1`) or `theta - pi/2`
/// (`-1`) for the second coefficient.
pub fn make_full_equipower_qam(
    modems: &Modems,
    k: usize,
    l: usize,
    gamma: f64,
    theta: f64,
    e: f64,
    sign: f64,
) -> Result<Preamble> {
    check_budget(e)?;
    let cfg = &modems.cfg;
    let m = cfg.m;
    let nu = cfg.nu();
    if 2 * cfg.lh >= m {
        return Err(Error::Construction(format!("need L_h < M/2, got L_h = {}, M = {m}", cfg.lh)));
    }
    if k.abs_diff(l) != m / 2 {
        return Err(Error::Construction(format!("columns {k} and {l} are not M/2 apart")));
    }
    if k >= m - nu || l >= m - nu {
        return Err(Error::Construction(format!("columns must lie below M - nu = {}", m - nu)));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Construction(format!("gamma = {gamma} outside (0, 1]")));
    }
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::Construction("sign must be +1 or -1".into()));
    }
    let s = (e / m as f64).sqrt();
    let ak = Complex64::from_polar(s * gamma, theta);
    let al = Complex64::from_polar(s * (1.0 - gamma * gamma).max(0.0).sqrt(), theta + sign * PI / 2.0);
    let mut p = Preamble::blank(Scheme::Qam, Layout::Full, EnergyMode::Antenna, e, IndexSet::full(m), PhaseRule::Equal);
    for r in 0..m {
        let x = ak * crate::spectral::twiddle((r * k) as i64, m) + al * crate::spectral::twiddle((r * l) as i64, m);
        p.put(r, 0, x, CellRole::Pilot);
    }
    Ok(p)
}

fn qpsk<R: Rng + ?Sized>(r: &mut R, modulus: f64) -> Complex64 {
    // Gray-mapped QPSK: bit 0 -> sign of I, bit 1 -> sign of Q.
    let bits: u8 = r.random_range(0..4);
    let i = if bits & 1 == 0 { 1.0 } else { -1.0 };
    let q = if bits & 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(i, q) * (modulus * FRAC_1_SQRT_2)
}

/// Random real OQAM data amplitude for pilot energy `ex`.
pub fn oqam_data_amplitude(mapping: DataMapping, ex: f64) -> f64 {
    match mapping {
        DataMapping::QpskComponent => (ex / 2.0).sqrt(),
        DataMapping::PilotAmplitude => ex.sqrt(),
    }
}

/// Sparse preamble (L_h equal pilots, budget `E`) whose inactive positions
/// carry data as dictated by `scenario`; help pilots inserted where required.
pub fn make_sparse_data(
    modems: &Modems,
    scenario: Scenario,
    i0: usize,
    e: f64,
    data_seed: u64,
    mapping: DataMapping,
) -> Result<Preamble> {
    check_budget(e)?;
    let cfg = &modems.cfg;
    let m = cfg.m;
    let ratio = m / cfg.lh;
    if scenario == Scenario::Oqam1b && ratio < 4 {
        return Err(Error::Config(format!("guarded pilots need M/L_h >= 4, got {ratio}")));
    }
    let pilots = equispaced_set(m, cfg.lh, i0)?;
    let ex = e / cfg.lh as f64;
    let amp = ex.sqrt();
    let mut r = rng::rng(data_seed);
    let layout = Layout::SparseData { scenario, i0 };
    let scheme = scenario.scheme();
    let rule = match scheme {
        Scheme::Qam => PhaseRule::Equal,
        Scheme::Oqam => PhaseRule::Data,
    };
    let mut p = Preamble::blank(scheme, layout, EnergyMode::Antenna, e, pilots.clone(), rule);
    if scheme == Scheme::Qam {
        for k in 0..m {
            if pilots.contains(k) {
                p.put(k, 0, Complex64::new(amp, 0.0), CellRole::Pilot);
            } else {
                p.put(k, 0, qpsk(&mut r, amp), CellRole::Data);
            }
        }
        return Ok(p);
    }

    let d = oqam_data_amplitude(mapping, ex);
    let draw = |r: &mut rand_chacha::ChaCha8Rng| if r.random::<bool>() { d } else { -d };
    let guarded = matches!(scenario, Scenario::Oqam1b | Scenario::Oqam2);
    let is_guard = |k: usize| {
        guarded && (pilots.contains((k + 1) % m) || pilots.contains((k + m - 1) % m))
    };
    for k in 0..m {
        if pilots.contains(k) {
            p.put_real(k, 0, amp, CellRole::Pilot);
        } else if is_guard(k) {
            p.put_real(k, 0, 0.0, CellRole::Zero);
        } else {
            let a = draw(&mut r);
            p.put_real(k, 0, a, CellRole::Data);
        }
    }
    if scenario.has_side_data() {
        for k in 0..m {
            if !pilots.contains(k) {
                let a = draw(&mut r);
                p.put_real(k, 1, a, CellRole::Data);
            }
        }
        let grid = p.grid();
        let table = modems.bank.table();
        let helps: Vec<(usize, f64)> = pilots
            .as_slice()
            .iter()
            .map(|&k| Ok((k, oqam::help_pilot(&grid, table, (k, 0), (k, 1))?)))
            .collect::<Result<_>>()?;
        for (k, h) in helps {
            p.put_real(k, 1, h, CellRole::Help);
        }
    }
    Ok(p)
}

use std::path::PathBuf;
use std::process::ExitCode;

use chanest::analysis;
use chanest::harness::{self, FileConfig, Scale};
use chanest::oqam::{PrototypeDesign, PrototypeFilter};
use chanest::preamble::{make_full_equipower_qam, Modems};
use chanest::{Result, SystemConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "chanest", version, about = "Preamble-based channel estimation experiments for CP-OFDM and OFDM/OQAM")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a figure preset and write its NMSE curves as CSV.
    Run {
        /// fig1a .. fig8b (may come from --config instead).
        #[arg(long)]
        preset: Option<String>,
        /// desk or paper.
        #[arg(long)]
        scale: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// TOML file with overrides; command-line flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        channels: Option<usize>,
        #[arg(long)]
        noise: Option<usize>,
    },
    /// Run the optimality and identity checks; nonzero exit on any failure.
    Verify {
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        lh: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print an equipowered full CP-OFDM preamble with zero CP energy.
    Design {
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 8)]
        lh: usize,
        /// First of the two paired tones (the second is k + M/2).
        #[arg(long, default_value_t = 0)]
        tone: usize,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        sign: f64,
        #[arg(long, default_value_t = 1.0)]
        energy: f64,
    },
    /// Write prototype filter taps, one per line.
    Prototype {
        #[arg(long, default_value_t = 128)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        k: usize,
        /// default, frequency-sampling, egf or egf:<alpha>.
        #[arg(long, default_value = "default")]
        design: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run { preset, scale, seed, out, config, channels, noise } => {
            let file = match &config {
                Some(p) => FileConfig::load(p)?,
                None => FileConfig::default(),
            };
            let name = preset
                .or_else(|| file.preset.clone())
                .ok_or_else(|| chanest::Error::Usage("--preset is required".into()))?;
            let scale = Scale::parse(scale.as_deref().or(file.scale.as_deref()).unwrap_or("desk"))?;
            let mut cfg = harness::preset(&name, scale)?;
            file.apply(&mut cfg)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = Some(o);
            }
            if let Some(n) = channels {
                cfg.n_channels = n;
            }
            if let Some(n) = noise {
                cfg.n_noise = n;
            }
            let curves = harness::run_experiment(&cfg)?;
            for c in &curves {
                println!("{c}");
            }
            match &cfg.out {
                Some(path) => harness::write_csv(&curves, path)?,
                None => print!("{}", harness::to_csv(&curves)),
            }
            Ok(true)
        }
        Cmd::Verify { m, lh, k, trials, seed } => {
            let cfg = SystemConfig::new(m, lh, k, 1.0)?;
            let modems = Modems::new(&cfg)?;
            let report = analysis::verify_with(&modems, trials, seed)?;
            print!("{report}");
            println!(
                "INFO beta {:.6}, zeta {:.6}, |u(dm=2)| {:.2e} beta, max |dm| >= 2 {:.2e} beta",
                modems.beta(),
                modems.bank.table().zeta(),
                modems.bank.table().kernel(0, 2).norm() / modems.beta(),
                analysis::second_order_residual(&modems)
            );
            Ok(report.all_passed())
        }
        Cmd::Design { m, lh, tone, gamma, theta, sign, energy } => {
            let cfg = SystemConfig::new(m, lh, 1, energy)?;
            let modems = Modems::new(&cfg)?;
            let p = make_full_equipower_qam(&modems, tone, tone + m / 2, gamma, theta, energy, sign)?;
            let frame = modems.ofdm.modulate(p.column(0))?;
            println!("# tones {tone},{}; gamma {gamma}; theta {theta}; sign {sign}", tone + m / 2);
            println!("# CP energy {:.3e}; PAPR {:.3}", frame.cp_energy(), analysis::papr(&frame.s)?);
            print!("{}", p.to_csv());
            Ok(true)
        }
        Cmd::Prototype { m, k, design, out } => {
            let g = PrototypeFilter::design(m, k, &PrototypeDesign::parse(&design, k)?)?;
            match out {
                Some(path) => std::fs::write(path, g.to_text())?,
                None => print!("{}", g.to_text()),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

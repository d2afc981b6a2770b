//! `skylink`: link budgets, Fried-parameter fits, coupling predictions, QKD
//! rate analysis, synthetic WFS logs and parameter sweeps.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] skylink_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use skylink_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Model(E::Io(_) | E::Csv(_) | E::Parse { .. }) | CliError::Io(_) => 4,
            CliError::Model(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "skylink",
    version,
    about = "Free-space QKD link engineering toolkit"
)]
pub struct Cli {
    /// JSON run configuration
    #[arg(long, global = true, env = "SKYLINK_CONFIG")]
    config: Option<PathBuf>,
    /// Machine-readable output file (.json or .csv)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Log progress and diagnostics
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Channel budget at one operating point
    Budget(BudgetArgs),
    /// Fit the Fried parameter to per-mode variances of a WFS log
    FitR0(FitArgs),
    /// Predict fiber coupling from a closed-loop WFS log
    PredictSmf(PredictArgs),
    /// Rates, channel efficiency and secret key rate
    Qkd(QkdArgs),
    /// Tabulate every efficiency term over a parameter range
    Sweep(SweepArgs),
    /// Write a seeded synthetic WFS log
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    /// Fried parameter at the link wavelength (m)
    #[arg(long, allow_hyphen_values = true)]
    pub r0: Option<f64>,
    /// Absorption coefficient (dB/km)
    #[arg(long = "a-coeff", allow_hyphen_values = true)]
    pub a_coeff: Option<f64>,
    /// Wind speed (m/s)
    #[arg(long, allow_hyphen_values = true)]
    pub wind: Option<f64>,
    /// Use this fiber coupling (dB) instead of the model
    #[arg(long = "eta-smf", allow_hyphen_values = true)]
    pub eta_smf_db: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// WFS log CSV
    pub wfs_csv: PathBuf,
    /// Modes to fit, e.g. `1-35` or `3-35` or `1,2,5-10`
    #[arg(long, default_value = "1-35")]
    pub modes: String,
    /// Override the aperture diameter from the log header (m)
    #[arg(long = "d-rx")]
    pub d_rx: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Closed-loop WFS log CSV
    pub ao_on_csv: PathBuf,
    /// Open-loop WFS log CSV to fit r0 from
    #[arg(long = "ao-off", conflicts_with = "r0", required_unless_present = "r0")]
    pub ao_off: Option<PathBuf>,
    /// Fried parameter at the link wavelength (m), instead of a fit
    #[arg(long, allow_hyphen_values = true)]
    pub r0: Option<f64>,
    /// Wind speed (m/s)
    #[arg(long, allow_hyphen_values = true)]
    pub wind: Option<f64>,
    /// Modes used in the r0 fit
    #[arg(long, default_value = "1-35")]
    pub modes: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Detector {
    Snspd,
    Spad,
}

#[derive(Debug, Args)]
pub struct QkdArgs {
    /// Session log CSV (t_s,signal_hz,noise_hz,qber_z,qber_x,skr_bps)
    #[arg(long, conflicts_with_all = ["eta_ch_db", "rate"])]
    pub log: Option<PathBuf>,
    /// Channel efficiency (dB) to predict rates for
    #[arg(long = "eta-ch", allow_hyphen_values = true, conflicts_with = "rate")]
    pub eta_ch_db: Option<f64>,
    /// Measured signal rate (Hz) to invert for the channel efficiency
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, value_enum, default_value = "snspd")]
    pub detector: Detector,
    /// Logged noise rates are already restricted to the coincidence window
    #[arg(long = "noise-windowed")]
    pub noise_windowed: bool,
    /// Intrinsic (optical) QBER used with --eta-ch
    #[arg(long = "intrinsic-qber", default_value_t = 0.005)]
    pub intrinsic_qber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    R0,
    Wind,
    ACoeff,
    #[value(name = "J")]
    J,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub variable: SweepVar,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Operating point for the variables not swept
    #[arg(long, allow_hyphen_values = true)]
    pub r0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub wind: Option<f64>,
    #[arg(long = "a-coeff", allow_hyphen_values = true)]
    pub a_coeff: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Fried parameter at the output wavelength (m)
    #[arg(long, default_value_t = 0.05)]
    pub r0: f64,
    #[arg(long = "d-rx")]
    pub d_rx: Option<f64>,
    #[arg(long)]
    pub wavelength: Option<f64>,
    #[arg(long = "j-max", default_value_t = 35)]
    pub j_max: usize,
    #[arg(long = "n-samples", default_value_t = 10_000)]
    pub n_samples: usize,
    /// Hz
    #[arg(long = "sample-rate", default_value_t = 100.0)]
    pub sample_rate: f64,
    /// m/s
    #[arg(long, default_value_t = 0.0)]
    pub wind: f64,
    /// Attenuate the corrected modes as a closed loop would
    #[arg(long = "ao-on")]
    pub ao_on: bool,
    /// Closed-loop rejection bandwidth (Hz)
    #[arg(long = "f-3db")]
    pub f_3db: Option<f64>,
    #[arg(long = "corrected-modes")]
    pub corrected_modes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = cli.out.as_deref();
    let report = match &cli.command {
        Command::Budget(a) => commands::budget(&cfg, a)?,
        Command::FitR0(a) => commands::fit_r0(&cfg, a)?,
        Command::PredictSmf(a) => commands::predict_smf(&cfg, a)?,
        Command::Qkd(a) => commands::qkd(&cfg, a)?,
        Command::Sweep(a) => commands::sweep(&cfg, a)?,
        Command::Synth(a) => return commands::synth(&cfg, a, out),
    };
    print!("{}", report.render());
    if let Some(p) = out {
        report.write(p)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Debug
        } else {
            log::LevelFilter::Warn
        })
        .format_timestamp(None)
        .init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

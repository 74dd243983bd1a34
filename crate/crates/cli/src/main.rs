use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qkd_cli::commands;
use qkd_cli::config::{ConfigFile, ProtocolSelection, Range, Settings};
use qkd_cli::Result;
use qkd_core::sim::DepolMode;
use qkd_core::Visibility;

/// BB84 and SARG04 over a depolarizing, lossy channel: closed-form curves,
/// Monte Carlo runs, comparisons and secure-rate sweeps.
#[derive(Debug, Parser)]
#[command(name = "qkd", version)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form QBER and sifted-rate curves over the visibility sweep.
    Curves {
        /// Add Monte Carlo points (both protocols) at every sweep value.
        #[arg(long)]
        mc: bool,
    },
    /// One Monte Carlo run per selected protocol; writes stats JSON.
    Simulate,
    /// Monte Carlo against closed forms; exit status 3 if any metric fails.
    Compare {
        /// Visibility for the closed-form targets, if different from the
        /// simulated one.
        #[arg(long)]
        target_visibility: Option<f64>,
    },
    /// Optimal-mu secure rate over the visibility sweep.
    SecureSweep,
    /// QBER, sifted-rate and secure-rate bundle for the reference setup.
    ReplicatePaper,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DepolArg {
    PerPhoton,
    PerPulse,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pulses per Monte Carlo run.
    #[arg(long, global = true)]
    pulses: Option<u64>,
    /// Channel visibility.
    #[arg(long, global = true)]
    visibility: Option<f64>,
    /// Mean photon number.
    #[arg(long, global = true)]
    mu: Option<f64>,
    #[arg(long, global = true, value_enum)]
    protocol: Option<ProtocolSelection>,
    /// Output directory (default: $QKD_OUT_DIR or ./qkd-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    tolerance_sigmas: Option<f64>,
    /// Intrinsic channel visibility composed with --visibility.
    #[arg(long, global = true)]
    intrinsic_visibility: Option<f64>,
    #[arg(long, global = true, value_enum)]
    depol_mode: Option<DepolArg>,
    /// Dark-count probability per detector gate.
    #[arg(long, global = true)]
    dark_count_prob: Option<f64>,
    /// Error-correction inefficiency for the secure-rate bound.
    #[arg(long, global = true)]
    f_ec: Option<f64>,
    #[arg(long, global = true)]
    v_start: Option<f64>,
    #[arg(long, global = true)]
    v_stop: Option<f64>,
    #[arg(long, global = true)]
    v_step: Option<f64>,
    /// Monte Carlo worker threads (results do not depend on it).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Ledger file (default: <out>/ledger.jsonl).
    #[arg(long, global = true)]
    ledger: Option<PathBuf>,
}

impl Common {
    fn settings(&self, mc: bool) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let flags = ConfigFile {
            protocol: self.protocol,
            visibility: self.visibility,
            intrinsic_visibility: self.intrinsic_visibility,
            mu: self.mu,
            dark_count_prob: self.dark_count_prob,
            pulses: self.pulses,
            seed: self.seed,
            depol_mode: self.depol_mode.map(|m| match m {
                DepolArg::PerPhoton => DepolMode::PerPhoton,
                DepolArg::PerPulse => DepolMode::PerPulse,
            }),
            f_ec: self.f_ec,
            tolerance_sigmas: self.tolerance_sigmas,
            mc: mc.then_some(true),
            workers: self.workers,
            out_dir: self.out.clone(),
            ledger: self.ledger.clone(),
            ..ConfigFile::default()
        };
        let mut merged = file.overlay(flags);
        if self.v_start.is_some() || self.v_stop.is_some() || self.v_step.is_some() {
            let mut sweep = merged.sweep.unwrap_or(Range::VISIBILITY);
            sweep.start = self.v_start.unwrap_or(sweep.start);
            sweep.stop = self.v_stop.unwrap_or(sweep.stop);
            sweep.step = self.v_step.unwrap_or(sweep.step);
            merged.sweep = Some(sweep);
        }
        Settings::resolve(merged)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Curves { mc } => commands::cmd_curves(&cli.common.settings(mc)?, &mut stdout),
        Command::Simulate => commands::cmd_simulate(&cli.common.settings(false)?, &mut stdout).map(drop),
        Command::Compare { target_visibility } => {
            let mut settings = cli.common.settings(false)?;
            settings.target_visibility = target_visibility.map(Visibility::new).transpose()?;
            commands::cmd_compare(&settings, &mut stdout).map(drop)
        }
        Command::SecureSweep => commands::cmd_secure_sweep(&cli.common.settings(false)?, &mut stdout),
        Command::ReplicatePaper => commands::cmd_replicate_paper(&cli.common.settings(false)?, &mut stdout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

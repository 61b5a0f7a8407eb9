use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use lowres_core::harness::{
    emit_alpha_diagnostics, report_complexity, run_sweep, write_alpha_csv, write_complexity_csv, write_sweep_csv,
    SweepOptions, SystemConfig,
};
use lowres_core::rate_eval::Mode;

#[derive(Parser)]
#[command(name = "lowres-sim", version, about = "Low-resolution MISO-OFDM precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Average GMI over the SNR and CSI-error grids for every configured precoder
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Record wall time per point (the CSV then differs between runs)
        #[arg(long)]
        timing: bool,
    },
    /// Multiplication counts under doubling of T, N, K and L
    Complexity(Common),
    /// Mean alpha of the coordinate precoder against the Wiener-filter alpha
    Alpha(Common),
    /// Check a configuration and print its resolved form
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset, used when no config file is given
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo blocks (default: all cores)
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the channel-estimation mode
    #[arg(long, value_parser = ["pat", "data-aided"])]
    mode: Option<String>,
}

impl Common {
    fn config(&self) -> Result<SystemConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => anyhow::bail!("--config and --preset are mutually exclusive"),
            (Some(path), None) => SystemConfig::load(path)?,
            (None, Some(name)) => SystemConfig::preset(name)?,
            (None, None) => SystemConfig::preset("system-a-mini")?,
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse::<Mode>().map_err(anyhow::Error::msg)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
            )),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            anyhow::ensure!(n > 0, "--workers must be positive");
            builder = builder.num_threads(n);
        }
        Ok(builder.build()?)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep { common, timing } => {
            let cfg = common.config()?;
            let rows = common.pool()?.install(|| run_sweep(&cfg, &SweepOptions { timing }))?;
            for row in &rows {
                if let Some(e) = &row.error {
                    eprintln!("{} at {} dB, epsilon {}: {e}", row.precoder, row.snr_db, row.epsilon);
                }
            }
            write_sweep_csv(&rows, cfg.n_ue, common.output()?)?;
        }
        Command::Complexity(common) => {
            let cfg = common.config()?;
            let rows = report_complexity(&cfg, &cfg.precoders)?;
            write_complexity_csv(&rows, common.output()?)?;
        }
        Command::Alpha(common) => {
            let cfg = common.config()?;
            let rows = common.pool()?.install(|| emit_alpha_diagnostics(&cfg))?;
            write_alpha_csv(&rows, common.output()?)?;
        }
        Command::ValidateConfig(common) => {
            let cfg = common.config()?;
            cfg.link_setup()?;
            let mut out = common.output()?;
            writeln!(out, "# config hash {}", cfg.hash())?;
            out.write_all(cfg.to_toml().as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

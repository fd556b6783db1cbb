use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rsbf_cli::checks::Level;
use rsbf_cli::commands::{self, Overrides, SolveOnce};

/// Robust secure beamforming for IRS-aided mmWave links.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo sweep to CSV
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of trials per sweep value
        #[arg(long)]
        trials: Option<usize>,
        /// Worker threads (default: all cores)
        #[arg(long)]
        workers: Option<usize>,
        /// Output CSV path
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a matplotlib script next to the CSV
        #[arg(long)]
        emit_plot_script: bool,
    },
    /// Solve one channel and print its rates
    SolveOnce {
        #[command(flatten)]
        common: Common,
        /// Trial index of the channel to draw
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Replay a channel saved with --save-channel
        #[arg(long)]
        channel: Option<PathBuf>,
        /// Save the channel as JSON
        #[arg(long)]
        save_channel: Option<PathBuf>,
        /// Write the final q-step (and w-step) SDPs into this directory
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
        /// Solution JSON path
        #[arg(long, default_value = "solution.json")]
        out: PathBuf,
    },
    /// Oracle-equivalence and invariant checks
    Verify {
        #[arg(value_enum)]
        level: VerifyLevel,
        /// Master seed
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Multiply every tolerance by this factor
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Experiment file (TOML)
    #[arg(long, env = "RSBF_CONFIG")]
    config: Option<PathBuf>,
    /// Scheme(s): robust, perfect, average, mrt, optionally suffixed
    /// -colluding or -noncolluding
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<String>>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VerifyLevel {
    Quick,
    Full,
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Args) -> Result<ExitCode> {
    let mut stdout = std::io::stdout().lock();
    match args.command {
        Command::Run {
            common,
            trials,
            workers,
            out,
            emit_plot_script,
        } => {
            let spec = commands::load_spec(
                common.config.as_deref(),
                &Overrides {
                    schemes: common.scheme,
                    seed: common.seed,
                    trials,
                    out,
                    emit_plot_script,
                },
            )?;
            commands::run(&spec, workers, &mut stdout)?;
        }
        Command::SolveOnce {
            common,
            trial,
            channel,
            save_channel,
            dump_sdp,
            out,
        } => {
            let spec = commands::load_spec(
                common.config.as_deref(),
                &Overrides {
                    schemes: common.scheme,
                    seed: common.seed,
                    ..Overrides::default()
                },
            )?;
            let record = commands::solve_once(
                &spec,
                &SolveOnce {
                    trial,
                    channel,
                    save_channel,
                    dump_sdp,
                },
                &mut stdout,
            )?;
            std::fs::write(&out, record.to_json())
                .with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Verify {
            level,
            seed,
            tolerance_scale,
        } => {
            let level = match level {
                VerifyLevel::Quick => Level::Quick,
                VerifyLevel::Full => Level::Full,
            };
            let ok = commands::verify(
                level,
                seed,
                tolerance_scale,
                &mut stdout,
                &mut std::io::stderr(),
            )?;
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

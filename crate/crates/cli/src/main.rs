//! `unwind`: simulate, filter, unwind, view, measure and serve 360° datasets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod serve;

/// Exit status for every failure, including usage errors.
const EXIT_FAILURE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "unwind", version, about = "Rotation unwinding for 360° video datasets")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory (simulate, unwind, view) or file (filter, drift).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config: dataset config for simulate, filter config for filter.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Noise seed for simulate.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset: frames, IMU trace and ground truth.
    Simulate(commands::SimulateArgs),
    /// Estimate camera orientations from a dataset's IMU trace.
    Filter(commands::FilterArgs),
    /// Write world-aligned copies of every frame.
    Unwind(commands::UnwindArgs),
    /// Render viewer viewports in coupled (cr) or unwound (ur) mode.
    View(commands::ViewArgs),
    /// Compare an orientation estimate against ground truth.
    Drift(commands::DriftArgs),
    /// Serve a dataset directory read-only over HTTP.
    Serve(commands::ServeArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_FAILURE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.common.log_level)
        .format_target(false)
        .init();

    let result = configure_threads(cli.common.threads).and_then(|()| match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli.common, a),
        Command::Filter(a) => commands::filter(&cli.common, a),
        Command::Unwind(a) => commands::unwind(&cli.common, a),
        Command::View(a) => commands::view(&cli.common, a),
        Command::Drift(a) => commands::drift(&cli.common, a),
        Command::Serve(a) => serve::run(&cli.common, a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    log::debug!("using {} worker threads", rayon::current_num_threads());
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod compare;
mod config;
mod figures;
mod output;
mod run;

use output::CliError;

/// Throughput sweeps for cache-enabled mmWave access/backhaul networks.
#[derive(Debug, Parser)]
#[command(name = "mabnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate a config (single point or sweep) and write results.
    Run {
        config: PathBuf,
        #[arg(long, default_value = "mabnet-out")]
        out_dir: PathBuf,
    },
    /// Write the figure data sets fig2.csv .. fig5.csv.
    Figures {
        #[arg(long, default_value = "mabnet-figures")]
        out_dir: PathBuf,
        /// Coarser grids.
        #[arg(long)]
        quick: bool,
    },
    /// Check a config and print it with every default filled in.
    Validate { config: PathBuf },
    /// Compare analytical association, coverage and APT with simulation.
    McCompare {
        config: PathBuf,
        #[arg(long, default_value = "mabnet-compare")]
        out_dir: PathBuf,
    },
}

const THREADS_VAR: &str = "MABNET_THREADS";

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR}: expected a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("{THREADS_VAR}: {e}"))
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run { config, out_dir } => run::run(&config, &out_dir),
        Command::Figures { out_dir, quick } => figures::figures(&out_dir, figures::FigureOptions { quick }),
        Command::Validate { config } => {
            let resolved = config::load(&config).map_err(CliError::Config)?;
            print!("{}", config::to_toml(&resolved.config));
            eprintln!("{}: ok ({} point(s))", config.display(), resolved.points.len());
            Ok(())
        }
        Command::McCompare { config, out_dir } => compare::mc_compare(&config, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

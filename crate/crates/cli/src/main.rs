//! `fbns` - spectral Lagrangian solver for the vacuum free-boundary
//! compressible Navier-Stokes equations on the slab.
//!
//! Subcommands: `verify` (invariant suites + JSON report), `run` (Picard
//! iteration with per-step monitors and snapshots), `contraction-study`
//! (contraction ratio versus horizon). Exit codes: 0 ok, 2 configuration
//! error, 3 non-contraction, 4 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fbns_core::config::load_config;
use fbns_core::driver::{cmd_contraction_study, cmd_run, cmd_verify, exit_code_for};

#[derive(Parser)]
#[command(name = "fbns", about = "Vacuum free-boundary compressible Navier-Stokes solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariant verification suites and emit a JSON report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output.directory from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterate to the strong solution and write energy/iteration tables
    /// plus field snapshots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the contraction ratio of the solving operator per horizon.
    ContractionStudy {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list of horizons T.
        #[arg(long)]
        horizons: String,
        /// Seed for the perturbation RNG.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("fbns: {err}");
            exit_code_for(&err)
        }
    };
    ExitCode::from(code.clamp(0, 255) as u8)
}

fn dispatch(cli: Cli) -> fbns_core::Result<i32> {
    match cli.command {
        Command::Verify { config, out } => {
            let cfg = load_config(&config)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            cmd_verify(&cfg, &out_dir)
        }
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            cmd_run(&cfg, &out_dir)
        }
        Command::ContractionStudy { config, horizons, seed, out } => {
            let cfg = load_config(&config)?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            let horizons = parse_horizons(&horizons)?;
            cmd_contraction_study(&cfg, &horizons, seed, &out_dir)
        }
    }
}

fn parse_horizons(text: &str) -> fbns_core::Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        out.push(part.parse::<f64>().map_err(|_| {
            fbns_core::Error::Validation(format!("bad horizon value '{part}'"))
        })?);
    }
    if out.is_empty() {
        return Err(fbns_core::Error::Validation("empty horizon list".into()));
    }
    Ok(out)
}

//! `nullwave`: simulations, identity checks, Picard iteration and decay fits
//! for the coupled wave / Klein-Gordon system.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad input or I/O error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "nullwave", version, about = "Coupled wave / Klein-Gordon system with null-form couplings in 2+1 dimensions")]
struct Cli {
    /// directory for CSV outputs, snapshots and the run manifest
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the configured data and write energies, decay series and fits
    Simulate { config: PathBuf },
    /// Run the exact and discretized identity corpus
    Identities,
    /// Picard iteration of the solution map from the zero pair
    Picard { config: PathBuf },
    /// Fit power laws to the series in a CSV file
    DecayFit {
        csv: PathBuf,
        /// fit window `t_lo,t_hi`
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
    },
    /// Compare the free propagator with the disc-integral oracle
    LinearCheck,
    /// Temporal self-convergence of the nonlinear integrator
    Convergence { config: PathBuf },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected t_lo,t_hi")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("t_lo: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("t_hi: {e}"))?;
    if !(0.0 < a && a < b) {
        return Err(format!("window [{a}, {b}] must satisfy 0 < t_lo < t_hi"));
    }
    Ok((a, b))
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("NULLWAVE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("NULLWAVE_THREADS = '{v}' is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads()
        .and_then(|_| std::fs::create_dir_all(&cli.out).map_err(|e| format!("{}: {e}", cli.out.display())))
        .and_then(|_| match &cli.command {
            Command::Simulate { config } => commands::simulate(config, &cli.out),
            Command::Identities => commands::identities(&cli.out),
            Command::Picard { config } => commands::picard(config, &cli.out),
            Command::DecayFit { csv, window } => commands::decay_fit(csv, *window, &cli.out),
            Command::LinearCheck => commands::linear_check(&cli.out),
            Command::Convergence { config } => commands::convergence(config, &cli.out),
        });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

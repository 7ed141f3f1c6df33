use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "ris-ambc", version, about = "RIS-assisted ambient backscatter simulator")]
pub struct Cli {
    /// TOML run configuration; the reference testbed is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `[link].seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Cell table CSV (`voltage,amplitude_db,phase_deg`); overrides `[cell].table`.
    #[arg(long, global = true)]
    table: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample the cell response over a voltage grid and report the phase gap.
    CellModel,
    /// Synthesize and write the beamforming codebook.
    Codebook,
    /// Rasterize the field around a beam target.
    Fieldmap,
    /// BER for every codebook entry plus the reference-state baseline.
    BerSweep {
        /// Read entries from a codebook file instead of synthesizing them.
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Check per-cell deflection angles against the validity cone.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use qtl_core::config::{parse_config_with, Mode, Overrides};
use qtl_core::{harness, Error};

/// Measured-quantum / classical double-well simulations and chaos diagnostics.
#[derive(Parser, Debug)]
#[command(name = "qtl", version)]
struct Cli {
    /// quantum | classical | lyapunov | strobe | regime | sweep
    mode: String,
    /// Config file (`key = value` lines)
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, overrides the config
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, overrides the config
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_config() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode: Mode = match cli.mode.parse() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("qtl: {e}");
            return ExitCode::from(2);
        }
    };
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("qtl: cannot read {}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    let ov = Overrides {
        mode: Some(mode),
        seed: cli.seed,
        workers: cli.workers,
        output_dir: cli.out,
    };
    let result = parse_config_with(&text, &ov).and_then(|cfg| harness::run(&cfg));
    match result {
        Ok(summary) => {
            println!("{}", summary.line);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qtl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

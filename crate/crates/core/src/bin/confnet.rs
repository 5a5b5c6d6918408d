use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use confnet::cli::{parse_config, run_experiment, CliError, Mode};

/// Run a conferencing rate-control experiment from a config file.
#[derive(Debug, Parser)]
#[command(name = "confnet", version)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "celerity")]
    mode: Mode,
    /// Output directory; a directory named in the config takes precedence.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config duration, in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Fluid tick in ms, used when the config sets none.
    #[arg(long)]
    tick: Option<f64>,
    #[arg(long)]
    quiet: bool,
}

fn main_inner(args: &Args) -> Result<(), CliError> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.params.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration_s = d;
    }
    if let (Some(t), false) = (args.tick, cfg.tick_from_file) {
        cfg.params.tick_ms = t;
    }
    let out = cfg.out_dir.clone().unwrap_or_else(|| args.out.clone());
    let summary = run_experiment(&cfg, args.mode, &out)?;
    if !args.quiet {
        print!("{}", summary.render());
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("confnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

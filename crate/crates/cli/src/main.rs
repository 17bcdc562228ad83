use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use risklab_cli::commands::{
    cmd_bump_check, cmd_figure1, cmd_gap_scaling, cmd_gradcheck, cmd_rate_sweep,
};
use risklab_cli::ExperimentConfig;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Figure1,
    RateSweep,
    Gradcheck,
    BumpCheck,
    GapScaling,
}

/// Teacher-student ReLU regression experiments.
#[derive(Debug, Parser)]
#[command(name = "risklab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configuration's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let seed = cli.seed.unwrap_or(cfg.seed);
    let out = cli.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let result = match cli.command {
        Command::Figure1 => cmd_figure1(&cfg, seed, &out),
        Command::RateSweep => cmd_rate_sweep(&cfg, seed, &out),
        Command::Gradcheck => cmd_gradcheck(&cfg, seed, &out),
        Command::BumpCheck => cmd_bump_check(&cfg, seed, &out),
        Command::GapScaling => cmd_gap_scaling(&cfg, seed, &out),
    };
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privbandit_cli::{commands::default_out, execute, Command};

#[derive(Parser)]
#[command(name = "privbandit", version, about = "Private projection-free bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Single run: trace.csv, summary.json, timing.json.
    Run(Common),
    /// Horizon grid sweep with exponent fit: sweep.csv, fit.json.
    Sweep(Common),
    /// Calibration and statistical checks: audit.json. Exit code 1 on failure.
    Audit(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seeds.master` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Sub::Run(a) => (Command::Run, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Audit(a) => (Command::Audit, a),
    };
    let out = args.out.unwrap_or_else(default_out);
    let (line, ok) = execute(cmd, &args.config, args.seed, &out)?;
    println!("{line}");
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

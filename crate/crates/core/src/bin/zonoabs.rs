use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use zonoabs::cli::{run, Command, RunConfig, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Cmd {
    Abstract,
    Synthesize,
    Simulate,
    Compare,
    All,
}

/// Finite abstractions with robustness margins for nonlinear control systems.
#[derive(Debug, Parser)]
#[command(name = "zonoabs", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides io.out_dir; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed for simulation runs (overrides sim.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for abstraction and simulation.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = match args.command {
        Cmd::Abstract => Command::Abstract,
        Cmd::Synthesize => Command::Synthesize,
        Cmd::Simulate => Command::Simulate,
        Cmd::Compare => Command::Compare,
        Cmd::All => Command::All,
    };
    let options = RunOptions { out_dir: args.out, seed: args.seed, threads: args.threads };
    let result = RunConfig::load(&args.config).and_then(|cfg| run(command, &cfg, &options));
    match result {
        Ok(outcome) => {
            if let Some(r) = outcome.realizable {
                println!("{}", if r { "realizable" } else { "unrealizable" });
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}

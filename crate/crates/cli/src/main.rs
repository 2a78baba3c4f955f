//! `surprise-rl`: train, evaluate and compare surprise-minimizing PPO runs.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod compare;
mod eval;
mod train;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use surprise_rl::harness::PRESETS;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<surprise_rl::Error> for Failure {
    fn from(e: surprise_rl::Error) -> Self {
        match e {
            surprise_rl::Error::Config(_) | surprise_rl::Error::Checkpoint(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

#[derive(Parser)]
#[command(
    name = "surprise-rl",
    version,
    about = "Surprise-minimizing PPO on procedurally generated grid games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent and write config.dump, metrics.csv and checkpoints.
    Train(train::TrainArgs),
    /// Mean task score of a checkpoint on training or held-out levels.
    Eval(eval::EvalArgs),
    /// Final-window train/test scores and generalization gaps of finished runs.
    Compare(compare::CompareArgs),
    /// List the built-in presets.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Compare(args) => compare::run(args),
        Command::Presets => {
            for p in PRESETS {
                println!(
                    "{:<20} game={:<12} sm_mode={:<7} alpha={}",
                    p.name,
                    p.game.name(),
                    p.sm_mode.name(),
                    p.alpha()
                );
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let kind = if failure.code() == 2 { "error" } else { "run failed" };
            eprintln!("surprise-rl: {kind}: {failure}");
            ExitCode::from(failure.code())
        }
    }
}

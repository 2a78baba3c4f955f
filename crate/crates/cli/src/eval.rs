use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use rand::Rng;
use surprise_rl::env::{GameId, SeedSplit};
use surprise_rl::harness::evaluate;
use surprise_rl::nn::Checkpoint;
use surprise_rl::ppo::{ActorCritic, PpoConfig};
use surprise_rl::rng::{stream, Stream};

use crate::{CliResult, Failure};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Game to play; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    game: Option<String>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    #[arg(long, default_value_t = 32)]
    episodes: usize,
    /// Seed for level and action sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Size of the training split; defaults to the checkpoint's value.
    #[arg(long)]
    train_levels: Option<u64>,
    /// Step cap per episode; defaults to the checkpoint's value.
    #[arg(long)]
    max_episode_len: Option<u32>,
}

fn meta_or<T: FromStr>(ck: &Checkpoint, key: &str, given: Option<T>, fallback: T) -> CliResult<T> {
    if let Some(v) = given {
        return Ok(v);
    }
    match ck.meta.get(key) {
        None => Ok(fallback),
        Some(raw) => raw
            .parse()
            .map_err(|_| Failure::Usage(format!("checkpoint meta `{key}` has invalid value `{raw}`"))),
    }
}

pub fn run(args: EvalArgs) -> CliResult {
    if !args.checkpoint.is_file() {
        return Err(Failure::Usage(format!(
            "no checkpoint at {}",
            args.checkpoint.display()
        )));
    }
    if args.episodes == 0 {
        return Err(Failure::Usage("--episodes must be at least 1".into()));
    }
    let ck = Checkpoint::load(&args.checkpoint)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.checkpoint.display())))?;
    let agent = ActorCritic::from_checkpoint(&ck, &PpoConfig::default())
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.checkpoint.display())))?;

    let game = match (&args.game, ck.meta.get("game")) {
        (Some(name), _) | (None, Some(name)) => GameId::from_str(name).map_err(Failure::from)?,
        (None, None) => return Err(Failure::Usage("checkpoint does not record a game; pass --game".into())),
    };
    if agent.num_actions() != game.num_actions() {
        return Err(Failure::Usage(format!(
            "checkpoint policy has {} actions but {} has {}",
            agent.num_actions(),
            game.name(),
            game.num_actions()
        )));
    }
    let train_levels = meta_or(&ck, "train_levels", args.train_levels, 200)?;
    let max_len = meta_or(&ck, "max_episode_len", args.max_episode_len, 256)?;
    if !(1..surprise_rl::env::SEED_SPACE).contains(&train_levels) {
        return Err(Failure::Usage(format!("train_levels {train_levels} out of range")));
    }
    if max_len == 0 {
        return Err(Failure::Usage("max_episode_len must be at least 1".into()));
    }

    let split = SeedSplit::new(train_levels);
    let mut rng = stream(args.seed, Stream::Evaluation);
    let seeds: Vec<u64> = match args.split {
        Split::Train => (0..args.episodes).map(|_| rng.gen_range(split.train_seeds())).collect(),
        Split::Test => split.test_sampler(args.seed).take(args.episodes).collect(),
    };
    let score = evaluate(&agent, game, &seeds, args.episodes, max_len, &mut rng)?;
    let split_name = match args.split {
        Split::Train => "train",
        Split::Test => "test",
    };
    println!(
        "{} {split_name} mean score over {} episodes: {score:.4}",
        game.name(),
        args.episodes
    );
    Ok(())
}

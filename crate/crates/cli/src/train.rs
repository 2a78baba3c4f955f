use std::path::{Path, PathBuf};

use clap::Args;
use surprise_rl::harness::{Experiment, ExperimentConfig, Preset, PRESETS};
use surprise_rl::ppo::{preset_alpha, SmMode};

use crate::{CliResult, Failure};

pub const OUT_ENV: &str = "SURPRISE_RL_OUT";

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Start from a named preset (see `surprise-rl presets`).
    #[arg(long)]
    preset: Option<String>,
    /// TOML file with [env], [run], [ppo] and [vae] sections; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one field, e.g. `--set ppo.lr=3e-4`. Repeatable; applied last.
    #[arg(long = "set", value_name = "SECTION.FIELD=VALUE")]
    overrides: Vec<String>,
    /// Output root; defaults to $SURPRISE_RL_OUT, then `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run directory name inside the output root.
    #[arg(long)]
    name: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Total environment steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Density model for the SM reward. Without --alpha, also selects the
    /// game's preset alpha.
    #[arg(long, value_parser = ["off", "normal", "vae"])]
    sm_mode: Option<String>,
    /// Scale of the SM reward.
    #[arg(long)]
    alpha: Option<f64>,
    /// Only print the final summary.
    #[arg(long)]
    quiet: bool,
}

/// Defaults, then preset, then config file, then flags, then `--set`.
pub fn resolve(args: &TrainArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.preset {
        Some(name) => Preset::find(name)
            .ok_or_else(|| {
                let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                Failure::Usage(format!("unknown preset `{name}` (available: {})", known.join(", ")))
            })?
            .config(),
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg = cfg
            .merge_toml(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.run.total_env_steps = steps;
    }
    if let Some(mode) = &args.sm_mode {
        cfg.ppo.sm_mode = mode.parse::<SmMode>().map_err(Failure::from)?;
        cfg.ppo.alpha = preset_alpha(cfg.env.game, cfg.ppo.sm_mode);
    }
    if let Some(alpha) = args.alpha {
        cfg.ppo.alpha = alpha;
    }
    for kv in &args.overrides {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects SECTION.FIELD=VALUE, got `{kv}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_name(args: &TrainArgs, cfg: &ExperimentConfig) -> String {
    let base = args
        .preset
        .clone()
        .unwrap_or_else(|| format!("{}-{}", cfg.env.game.name(), cfg.ppo.sm_mode.name()));
    format!("{base}-seed{}", cfg.run.seed)
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{}: {e}", path.display()))
}

pub fn run(args: TrainArgs) -> CliResult {
    let cfg = resolve(&args)?;
    let root = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let name = args.name.clone().unwrap_or_else(|| run_name(&args, &cfg));
    if name.is_empty() || name.contains(['/', '\\']) {
        return Err(Failure::Usage(format!("invalid run name `{name}`")));
    }
    let dir = root.join(&name);
    let checkpoints = dir.join("checkpoints");
    std::fs::create_dir_all(&checkpoints).map_err(io(&checkpoints))?;
    let dump = dir.join("config.dump");
    std::fs::write(&dump, cfg.dump()).map_err(io(&dump))?;
    let metrics = dir.join("metrics.csv");

    let total = cfg.num_updates();
    let mut exp = Experiment::new(cfg)?;
    while !exp.is_finished() {
        let record = match exp.step() {
            Ok(r) => r.clone(),
            Err(e) => {
                let _ = exp.log().write(&metrics);
                return Err(Failure::Runtime(e.to_string()));
            }
        };
        if let (Some(train), Some(test)) = (record.train_score, record.test_score) {
            exp.checkpoint()
                .save(checkpoints.join(format!("update-{:06}.ckpt", record.update)))?;
            exp.log().write(&metrics)?;
            if !args.quiet {
                eprintln!(
                    "update {:>5}/{total}  steps {:>8}  train {train:6.2}  test {test:6.2}  entropy {:.3}",
                    record.update, record.steps, record.entropy
                );
            }
        }
    }
    exp.log().write(&metrics)?;
    exp.checkpoint().save(checkpoints.join("final.ckpt"))?;
    let last = exp.log().evaluations().last().map(|(_, tr, te)| (tr, te));
    if let Some((train, test)) = last {
        println!("final train {train:.3}  test {test:.3}");
    }
    println!("{}", dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        args: TrainArgs,
    }

    fn parse(argv: &[&str]) -> TrainArgs {
        Wrap::parse_from(std::iter::once("train").chain(argv.iter().copied())).args
    }

    #[test]
    fn flags_beat_preset_and_set_beats_flags() {
        let args = parse(&[
            "--preset",
            "coinrun-normal",
            "--seed",
            "4",
            "--alpha",
            "0.5",
            "--set",
            "ppo.alpha=0.25",
        ]);
        let cfg = resolve(&args).unwrap();
        assert_eq!(cfg.run.seed, 4);
        assert_eq!(cfg.ppo.alpha, 0.25);
        assert_eq!(cfg.ppo.sm_mode, SmMode::Normal);
    }

    #[test]
    fn sm_mode_flag_picks_preset_alpha() {
        let cfg = resolve(&parse(&["--set", "env.game=dodge_fight", "--sm-mode", "vae"])).unwrap();
        // --set is applied after --sm-mode, so alpha follows the default game
        assert_eq!(cfg.ppo.alpha, 1e-3);
        let cfg = resolve(&parse(&["--preset", "bossfight-baseline", "--sm-mode", "vae"])).unwrap();
        assert_eq!(cfg.ppo.alpha, 1e-5);
    }

    #[test]
    fn usage_errors() {
        for argv in [
            &["--preset", "nope"][..],
            &["--set", "ppo.gamma"],
            &["--set", "ppo.gamma=fast"],
            &["--steps", "10"],
            &["--config", "/definitely/not/here.toml"],
        ] {
            assert!(matches!(resolve(&parse(argv)), Err(Failure::Usage(_))), "{argv:?}");
        }
    }

    #[test]
    fn default_run_names() {
        let args = parse(&["--preset", "bossfight-vae", "--seed", "3"]);
        assert_eq!(run_name(&args, &resolve(&args).unwrap()), "bossfight-vae-seed3");
        let args = parse(&[]);
        assert_eq!(run_name(&args, &resolve(&args).unwrap()), "coin_seek-off-seed0");
    }
}

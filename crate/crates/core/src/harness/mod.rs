//! End-to-end training loop: rollouts on training levels, surprise-minimizing
//! reward from the configured density model, PPO updates and periodic
//! evaluation on both the training levels and fresh held-out levels.

mod config;
mod eval;
mod metrics;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use config::{EnvConfig, ExperimentConfig, Preset, RunConfig, PRESETS};
pub use eval::{evaluate, evaluate_with, policy_features};
pub use metrics::{final_window, generalization_gap, smooth, MetricsLog, MetricsRecord, WindowSummary, CSV_HEADER};

use crate::density::{fit_params, ObsBuffer, Vae, SIGMA_FLOOR};
use crate::env::{generate_level, EnvState, GameId, LevelSpec, SeedSplit, TestSampler};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::obs::to_unit_rgb;
use crate::ppo::{combine_rewards, ActorCritic, SmMode, TrajectoryBatch};
use crate::rng::{stream, Stream};

enum Density {
    Off,
    Normal(ObsBuffer),
    Vae(Box<Vae>),
}

struct Streams {
    actions: ChaCha8Rng,
    levels: ChaCha8Rng,
    shuffle: ChaCha8Rng,
    vae_noise: ChaCha8Rng,
    evaluation: ChaCha8Rng,
}

/// A training run in progress. Advance it with [`Experiment::step`].
pub struct Experiment {
    cfg: ExperimentConfig,
    split: SeedSplit,
    level_cache: HashMap<u64, Arc<LevelSpec>>,
    envs: Vec<EnvState>,
    features: Vec<Vec<f64>>,
    rgb: Vec<Vec<f64>>,
    agent: ActorCritic,
    density: Density,
    streams: Streams,
    test_sampler: TestSampler,
    test_seeds: Vec<u64>,
    update: usize,
    steps: usize,
    log: MetricsLog,
    started: Instant,
}

/// Everything a finished run leaves behind.
pub struct RunOutput {
    pub log: MetricsLog,
    pub agent: ActorCritic,
    pub vae: Option<Vae>,
    /// Every held-out seed evaluated during the run, in draw order.
    pub test_seeds: Vec<u64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.run.seed;
        let game = cfg.env.game;
        let split = SeedSplit::new(cfg.env.train_levels);
        let mut streams = Streams {
            actions: stream(seed, Stream::Actions),
            levels: stream(seed, Stream::LevelSampling),
            shuffle: stream(seed, Stream::Shuffle),
            vae_noise: stream(seed, Stream::VaeNoise),
            evaluation: stream(seed, Stream::Evaluation),
        };
        let mut level_cache = HashMap::new();
        let mut envs = Vec::with_capacity(cfg.run.num_envs);
        let mut observations = Vec::with_capacity(cfg.run.num_envs);
        for _ in 0..cfg.run.num_envs {
            let level_seed = streams.levels.gen_range(split.train_seeds());
            let level = Self::cached_level(&mut level_cache, game, level_seed)?;
            let (state, obs) = EnvState::reset(level, cfg.env.max_episode_len);
            envs.push(state);
            observations.push(obs);
        }
        let features: Vec<Vec<f64>> = observations.iter().map(policy_features).collect();
        let obs_dim = features[0].len();
        let agent = ActorCritic::new(
            obs_dim,
            game.num_actions(),
            &cfg.ppo,
            &mut stream(seed, Stream::PolicyInit),
            &mut stream(seed, Stream::ValueInit),
        )?;
        let with_vae = cfg.ppo.sm_mode == SmMode::Vae;
        let rgb: Vec<Vec<f64>> = if with_vae {
            observations.iter().map(to_unit_rgb).collect()
        } else {
            Vec::new()
        };
        let density = match cfg.ppo.sm_mode {
            SmMode::Off => Density::Off,
            SmMode::Normal => Density::Normal(ObsBuffer::for_minibatch(cfg.run.minibatch_size, obs_dim)),
            SmMode::Vae => Density::Vae(Box::new(Vae::new(
                rgb[0].len(),
                cfg.vae,
                &mut stream(seed, Stream::VaeInit),
            )?)),
        };
        Ok(Experiment {
            test_sampler: split.test_sampler(seed),
            split,
            level_cache,
            envs,
            features,
            rgb,
            agent,
            density,
            streams,
            test_seeds: Vec::new(),
            update: 0,
            steps: 0,
            log: MetricsLog::default(),
            started: Instant::now(),
            cfg,
        })
    }

    fn cached_level(cache: &mut HashMap<u64, Arc<LevelSpec>>, game: GameId, seed: u64) -> Result<Arc<LevelSpec>> {
        if let Some(level) = cache.get(&seed) {
            return Ok(level.clone());
        }
        let level = Arc::new(generate_level(game, seed)?);
        cache.insert(seed, level.clone());
        Ok(level)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn agent(&self) -> &ActorCritic {
        &self.agent
    }

    pub fn vae(&self) -> Option<&Vae> {
        match &self.density {
            Density::Vae(v) => Some(v),
            _ => None,
        }
    }

    pub fn log(&self) -> &MetricsLog {
        &self.log
    }

    pub fn test_seeds(&self) -> &[u64] {
        &self.test_seeds
    }

    pub fn updates_done(&self) -> usize {
        self.update
    }

    pub fn is_finished(&self) -> bool {
        self.update >= self.cfg.num_updates()
    }

    /// Networks plus enough metadata to evaluate them later.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("game".into(), self.cfg.env.game.name().into());
        ck.meta.insert("update".into(), self.update.to_string());
        ck.meta.insert("steps".into(), self.steps.to_string());
        ck.meta.insert("sm_mode".into(), self.cfg.ppo.sm_mode.name().into());
        ck.meta
            .insert("max_episode_len".into(), self.cfg.env.max_episode_len.to_string());
        ck.meta
            .insert("train_levels".into(), self.cfg.env.train_levels.to_string());
        self.agent.add_to_checkpoint(&mut ck);
        if let Some(vae) = self.vae() {
            vae.params.add_to_checkpoint(&mut ck, "vae");
        }
        ck
    }

    /// Run one collect / reward / update / (evaluate) cycle.
    pub fn step(&mut self) -> Result<&MetricsRecord> {
        if self.is_finished() {
            return Err(Error::Contract("experiment already finished".into()));
        }
        let update = self.update + 1;
        let record = self.step_inner(update).map_err(|e| Error::Update {
            update,
            source: Box::new(e),
        })?;
        self.update = update;
        self.log.push(record);
        Ok(self.log.records.last().expect("just pushed"))
    }

    fn collect(&mut self) -> Result<TrajectoryBatch> {
        let n = self.cfg.run.num_envs;
        let horizon = self.cfg.run.minibatch_size / n;
        let b = horizon * n;
        let dim = self.features[0].len();
        let with_rgb = !self.rgb.is_empty();
        let rgb_dim = self.rgb.first().map_or(0, Vec::len);
        let mut observations = Array2::zeros((b, dim));
        let mut raw = with_rgb.then(|| Array2::zeros((b, rgb_dim)));
        let mut actions = Vec::with_capacity(b);
        let mut log_probs = Vec::with_capacity(b);
        let mut values = Vec::with_capacity(b);
        let mut task_rewards = Vec::with_capacity(b);
        let mut dones = Vec::with_capacity(b);
        let game = self.cfg.env.game;
        for t in 0..horizon {
            let x = Array2::from_shape_fn((n, dim), |(e, c)| self.features[e][c]);
            let (acts, logps) = self.agent.sample(x.view(), &mut self.streams.actions)?;
            let vals = self.agent.values(x.view())?;
            observations.slice_mut(s![t * n..(t + 1) * n, ..]).assign(&x);
            if let Some(raw) = raw.as_mut() {
                for e in 0..n {
                    raw.row_mut(t * n + e)
                        .iter_mut()
                        .zip(&self.rgb[e])
                        .for_each(|(d, s)| *d = *s);
                }
            }
            for (e, &action) in acts.iter().enumerate() {
                let result = self.envs[e].step(action)?;
                task_rewards.push(result.task_reward);
                dones.push(result.done);
                let obs = if result.done {
                    let seed = self.streams.levels.gen_range(self.split.train_seeds());
                    let level = Self::cached_level(&mut self.level_cache, game, seed)?;
                    let (state, obs) = EnvState::reset(level, self.cfg.env.max_episode_len);
                    self.envs[e] = state;
                    obs
                } else {
                    result.obs
                };
                self.features[e] = policy_features(&obs);
                if with_rgb {
                    self.rgb[e] = to_unit_rgb(&obs);
                }
            }
            actions.extend(acts);
            log_probs.extend(logps);
            values.extend(vals);
        }
        let x = Array2::from_shape_fn((n, dim), |(e, c)| self.features[e][c]);
        let bootstrap_values = self.agent.values(x.view())?;
        self.steps += b;
        Ok(TrajectoryBatch {
            num_envs: n,
            observations,
            raw_observations: raw,
            actions,
            task_rewards,
            sm_rewards: vec![0.0; b],
            dones,
            log_probs,
            values,
            bootstrap_values,
        })
    }

    /// Fills `batch.sm_rewards`; returns the VAE loss when one was trained.
    fn surprise(&mut self, batch: &mut TrajectoryBatch) -> Result<Option<f64>> {
        let mb = self.cfg.run.minibatch_size;
        match &mut self.density {
            Density::Off => Ok(None),
            Density::Normal(buffer) => {
                let warm = buffer.len() >= mb;
                buffer.push(batch.observations.view())?;
                if warm {
                    let params = fit_params(buffer, SIGMA_FLOOR)?;
                    batch.sm_rewards = params.sm_rewards(batch.observations.view())?;
                }
                Ok(None)
            }
            Density::Vae(vae) => {
                let raw = batch
                    .raw_observations
                    .as_ref()
                    .ok_or_else(|| Error::Contract("VAE mode needs RGB observations".into()))?;
                let k = vae.params.latent_dim;
                let noise = Array2::from_shape_fn((raw.nrows(), k), |_| {
                    rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut self.streams.vae_noise)
                });
                let loss = vae.update(raw.view(), noise.view())?;
                let (latents, stats) = vae.latent_stats(raw.view())?;
                batch.sm_rewards = stats.log_probs(latents.view())?;
                Ok(Some(loss.total))
            }
        }
    }

    fn evaluate_splits(&mut self) -> Result<(f64, f64)> {
        let episodes = self.cfg.run.eval_episodes;
        let game = self.cfg.env.game;
        let max_len = self.cfg.env.max_episode_len;
        let train_seeds: Vec<u64> = (0..episodes)
            .map(|_| self.streams.evaluation.gen_range(self.split.train_seeds()))
            .collect();
        let test_seeds: Vec<u64> = (0..episodes).map(|_| self.test_sampler.sample()).collect();
        debug_assert!(test_seeds.iter().all(|&s| !self.split.is_train(s)));
        self.test_seeds.extend_from_slice(&test_seeds);
        let train = evaluate(
            &self.agent,
            game,
            &train_seeds,
            episodes,
            max_len,
            &mut self.streams.evaluation,
        )?;
        let test = evaluate(
            &self.agent,
            game,
            &test_seeds,
            episodes,
            max_len,
            &mut self.streams.evaluation,
        )?;
        Ok((train, test))
    }

    fn step_inner(&mut self, update: usize) -> Result<MetricsRecord> {
        let mut batch = self.collect()?;
        let vae_loss = self.surprise(&mut batch)?;
        batch.check()?;
        let (sm_mean, sm_std) = match self.cfg.ppo.sm_mode {
            SmMode::Off => (None, None),
            _ => {
                let (m, s) = mean_std(&batch.sm_rewards);
                (Some(m), Some(s))
            }
        };
        let mut sm = batch.sm_rewards.clone();
        if self.cfg.ppo.sm_normalize && sm.iter().any(|&x| x != 0.0) {
            crate::ppo::normalize(&mut sm);
        }
        let rewards = combine_rewards(&batch.task_rewards, &sm, self.cfg.ppo.alpha)?;
        let (adv, returns) = batch.advantages(&rewards, self.cfg.ppo.gamma, self.cfg.ppo.lambda)?;
        let stats = self
            .agent
            .update(&batch, &adv, &returns, &self.cfg.ppo, &mut self.streams.shuffle)?;

        let evaluate_now = update.is_multiple_of(self.cfg.run.eval_every) || update == self.cfg.num_updates();
        let (train_score, test_score) = if evaluate_now {
            let (tr, te) = self.evaluate_splits()?;
            (Some(tr), Some(te))
        } else {
            (None, None)
        };
        Ok(MetricsRecord {
            update,
            steps: self.steps,
            train_score,
            test_score,
            sm_mean,
            sm_std,
            pi_loss: stats.policy_loss,
            v_loss: stats.value_loss,
            entropy: stats.entropy,
            vae_loss,
            wall_ms: self
                .cfg
                .run
                .log_wall_clock
                .then(|| self.started.elapsed().as_millis() as u64),
        })
    }

    pub fn finish(self) -> RunOutput {
        let vae = match self.density {
            Density::Vae(v) => Some(*v),
            _ => None,
        };
        RunOutput {
            log: self.log,
            agent: self.agent,
            vae,
            test_seeds: self.test_seeds,
        }
    }
}

/// Run a full experiment. Deterministic given `cfg` (with wall-clock logging off).
pub fn run_experiment(cfg: ExperimentConfig) -> Result<RunOutput> {
    run_experiment_with(cfg, |_, _| Ok(()))
}

/// Like [`run_experiment`], calling `on_record` after every update.
pub fn run_experiment_with<F>(cfg: ExperimentConfig, mut on_record: F) -> Result<RunOutput>
where
    F: FnMut(&Experiment, &MetricsRecord) -> Result<()>,
{
    let mut exp = Experiment::new(cfg)?;
    while !exp.is_finished() {
        let record = exp.step()?.clone();
        on_record(&exp, &record)?;
    }
    Ok(exp.finish())
}

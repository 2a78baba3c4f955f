use serde::{Deserialize, Serialize};

use crate::density::VaeConfig;
use crate::env::{GameId, DEFAULT_MAX_EPISODE_LEN};
use crate::error::{Error, Result};
use crate::ppo::{preset_alpha, PpoConfig, SmMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub game: GameId,
    /// Training levels are seeds `0..train_levels`.
    pub train_levels: u64,
    pub max_episode_len: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            game: GameId::CoinSeek,
            train_levels: 200,
            max_episode_len: DEFAULT_MAX_EPISODE_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub total_env_steps: usize,
    /// Environment steps per rollout batch and per update.
    pub minibatch_size: usize,
    pub num_envs: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Fill the `wall_ms` column. Off by default so that logs are reproducible.
    pub log_wall_clock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            total_env_steps: 200_000,
            minibatch_size: 512,
            num_envs: 16,
            eval_every: 10,
            eval_episodes: 32,
            log_wall_clock: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub run: RunConfig,
    pub ppo: PpoConfig,
    pub vae: VaeConfig,
}

/// A named bundle of overrides on top of the defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub game: GameId,
    pub sm_mode: SmMode,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "coinrun-baseline",
        game: GameId::CoinSeek,
        sm_mode: SmMode::Off,
    },
    Preset {
        name: "coinrun-normal",
        game: GameId::CoinSeek,
        sm_mode: SmMode::Normal,
    },
    Preset {
        name: "coinrun-vae",
        game: GameId::CoinSeek,
        sm_mode: SmMode::Vae,
    },
    Preset {
        name: "bossfight-baseline",
        game: GameId::DodgeFight,
        sm_mode: SmMode::Off,
    },
    Preset {
        name: "bossfight-normal",
        game: GameId::DodgeFight,
        sm_mode: SmMode::Normal,
    },
    Preset {
        name: "bossfight-vae",
        game: GameId::DodgeFight,
        sm_mode: SmMode::Vae,
    },
];

impl Preset {
    pub fn find(name: &str) -> Option<Preset> {
        PRESETS.iter().copied().find(|p| p.name == name)
    }

    pub fn alpha(&self) -> f64 {
        preset_alpha(self.game, self.sm_mode)
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        cfg.env.game = self.game;
        cfg.ppo.sm_mode = self.sm_mode;
        cfg.ppo.alpha = self.alpha();
    }

    pub fn config(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        self.apply(&mut cfg);
        cfg
    }
}

fn merge(base: &mut toml::Table, patch: toml::Table, path: &str) -> Result<()> {
    for (key, value) in patch {
        let full = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p, &full)?,
            (Some(toml::Value::Table(_)), _) => {
                return Err(Error::Config(format!("`{full}` is a section, not a value")))
            }
            (Some(slot), value) => *slot = value,
            (None, _) => return Err(Error::Config(format!("unknown field `{full}`"))),
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let r = &self.run;
        if r.minibatch_size == 0 || r.num_envs == 0 || !r.minibatch_size.is_multiple_of(r.num_envs) {
            return bad(format!(
                "run.minibatch_size ({}) must be a positive multiple of run.num_envs ({})",
                r.minibatch_size, r.num_envs
            ));
        }
        if r.total_env_steps < r.minibatch_size {
            return bad(format!(
                "run.total_env_steps ({}) must be at least run.minibatch_size ({})",
                r.total_env_steps, r.minibatch_size
            ));
        }
        if r.eval_episodes == 0 || r.eval_every == 0 {
            return bad("run.eval_episodes and run.eval_every must be at least 1".into());
        }
        if r.seed > i64::MAX as u64 {
            return bad("run.seed must fit in a signed 64-bit integer".into());
        }
        if self.env.train_levels == 0 || self.env.train_levels >= crate::env::SEED_SPACE {
            return bad("env.train_levels must lie in [1, 2^32)".into());
        }
        if self.env.max_episode_len == 0 {
            return bad("env.max_episode_len must be positive".into());
        }
        if !(1..=100).contains(&self.vae.latent_dim)
            || self.vae.hidden == 0
            || !self.vae.lr.is_finite()
            || self.vae.lr <= 0.0
        {
            return bad("vae.latent_dim must lie in [1, 100]; vae.hidden and vae.lr must be positive".into());
        }
        self.ppo.validate()
    }

    pub fn num_updates(&self) -> usize {
        self.run.total_env_steps / self.run.minibatch_size
    }

    fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serialises to a table")
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
    }

    /// Overlay the keys present in a TOML document onto `self`.
    pub fn merge_toml(&self, text: &str) -> Result<Self> {
        let patch: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut table = self.to_table();
        merge(&mut table, patch, "")?;
        Self::from_table(table)
    }

    /// Set one dotted `section.field` key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key `{key}` must look like section.field")))?;
        let mut table = self.to_table();
        let current = table
            .get(section)
            .and_then(|s| s.get(field))
            .ok_or_else(|| Error::Config(format!("unknown field `{key}`")))?;
        let value = match current {
            toml::Value::Integer(_) => raw
                .parse::<i64>()
                .map(toml::Value::Integer)
                .map_err(|_| Error::Config(format!("`{key}` expects an integer, got `{raw}`")))?,
            toml::Value::Float(_) => raw
                .parse::<f64>()
                .map(toml::Value::Float)
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{raw}`")))?,
            toml::Value::Boolean(_) => raw
                .parse::<bool>()
                .map(toml::Value::Boolean)
                .map_err(|_| Error::Config(format!("`{key}` expects true or false, got `{raw}`")))?,
            _ => toml::Value::String(raw.to_string()),
        };
        if let Some(toml::Value::Table(s)) = table.get_mut(section) {
            s.insert(field.to_string(), value);
        }
        *self = Self::from_table(table).map_err(|e| Error::Config(format!("`{key}`: {e}")))?;
        Ok(())
    }

    /// Full effective configuration as TOML; parsing it back yields `self`.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn parse_dump(text: &str) -> Result<Self> {
        ExperimentConfig::default().merge_toml(text)
    }
}

//! PPO with a clipped surrogate, GAE and an optional surprise-minimizing reward term.

mod agent;
mod gae;
mod loss;

pub use agent::{ActorCritic, TrajectoryBatch, UpdateStats};
pub use gae::{gae, normalize};
pub use loss::{log_softmax, policy_loss, value_loss, PolicyLoss};

use serde::{Deserialize, Serialize};

use crate::env::GameId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmMode {
    Off,
    Normal,
    Vae,
}

impl SmMode {
    pub fn name(self) -> &'static str {
        match self {
            SmMode::Off => "off",
            SmMode::Normal => "normal",
            SmMode::Vae => "vae",
        }
    }
}

impl std::str::FromStr for SmMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(SmMode::Off),
            "normal" => Ok(SmMode::Normal),
            "vae" => Ok(SmMode::Vae),
            other => Err(Error::Config(format!("unknown sm mode `{other}` (off, normal, vae)"))),
        }
    }
}

/// Reward scale that brings each density model's surprise reward to the
/// magnitude of the task reward.
pub fn preset_alpha(game: GameId, mode: SmMode) -> f64 {
    match (game, mode) {
        (_, SmMode::Off) => 0.0,
        (GameId::CoinSeek, SmMode::Normal) => 1e-4,
        (GameId::DodgeFight, SmMode::Normal) => 1e-6,
        (GameId::CoinSeek, SmMode::Vae) => 1e-3,
        (GameId::DodgeFight, SmMode::Vae) => 1e-5,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub lr: f64,
    pub max_grad_norm: f64,
    pub hidden: usize,
    pub alpha: f64,
    pub sm_mode: SmMode,
    /// Standardise surprise rewards within each batch before scaling by `alpha`.
    pub sm_normalize: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            clip_eps: 0.2,
            gamma: 0.999,
            lambda: 0.95,
            entropy_coef: 0.01,
            value_coef: 0.5,
            epochs: 3,
            minibatches: 8,
            lr: 5e-4,
            max_grad_norm: 0.5,
            hidden: 64,
            alpha: 0.0,
            sm_mode: SmMode::Off,
            sm_normalize: false,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("ppo.clip_eps must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("ppo.gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("ppo.lambda must lie in [0, 1]");
        }
        if self.epochs == 0 || self.minibatches == 0 {
            return bad("ppo.epochs and ppo.minibatches must be positive");
        }
        if !self.lr.is_finite() || self.lr <= 0.0 || !self.alpha.is_finite() || self.hidden == 0 {
            return bad("ppo.lr must be positive, ppo.alpha finite and ppo.hidden positive");
        }
        Ok(())
    }
}

/// `r_task + alpha · r_sm`, elementwise.
pub fn combine_rewards(task: &[f64], sm: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if task.len() != sm.len() {
        return Err(Error::shape("combine_rewards", task.len(), sm.len()));
    }
    Ok(task.iter().zip(sm).map(|(t, s)| t + alpha * s).collect())
}

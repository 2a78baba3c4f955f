use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::env::{generate_level, EnvState, GameId, Observation};
use crate::error::{Error, Result};
use crate::obs::{to_grayscale, LUMA};
use crate::ppo::ActorCritic;

/// Grayscale features fed to the policy and value networks.
pub fn policy_features(obs: &Observation) -> Vec<f64> {
    to_grayscale(obs, LUMA).into_inner()
}

/// Mean raw task return of `episodes` episodes, assigned to `seeds`
/// round-robin, with actions sampled from the policy.
pub fn evaluate<R: Rng + ?Sized>(
    agent: &ActorCritic,
    game: GameId,
    seeds: &[u64],
    episodes: usize,
    max_episode_len: u32,
    rng: &mut R,
) -> Result<f64> {
    evaluate_with(|x| Ok(agent.sample(x, rng)?.0), game, seeds, episodes, max_episode_len)
}

/// [`evaluate`] for an arbitrary policy. `act` maps a batch of feature rows,
/// one per live episode in episode order, to one action per row.
///
/// All episodes run in lockstep so each step is a single batched call.
pub fn evaluate_with<F>(mut act: F, game: GameId, seeds: &[u64], episodes: usize, max_episode_len: u32) -> Result<f64>
where
    F: FnMut(ArrayView2<'_, f64>) -> Result<Vec<usize>>,
{
    if episodes == 0 || seeds.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            have: episodes.min(seeds.len()),
        });
    }
    let mut envs = Vec::with_capacity(episodes);
    let mut feats = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let level = Arc::new(generate_level(game, seeds[i % seeds.len()])?);
        let (state, obs) = EnvState::reset(level, max_episode_len);
        envs.push(state);
        feats.push(policy_features(&obs));
    }
    let dim = feats[0].len();
    loop {
        let live: Vec<usize> = (0..episodes).filter(|&i| !envs[i].done).collect();
        if live.is_empty() {
            break;
        }
        let x = Array2::from_shape_fn((live.len(), dim), |(r, c)| feats[live[r]][c]);
        let actions = act(x.view())?;
        if actions.len() != live.len() {
            return Err(Error::shape("evaluate actions", live.len(), actions.len()));
        }
        for (&i, &a) in live.iter().zip(&actions) {
            let step = envs[i].step(a)?;
            feats[i] = policy_features(&step.obs);
        }
    }
    Ok(envs.iter().map(|e| e.episode_return).sum::<f64>() / episodes as f64)
}

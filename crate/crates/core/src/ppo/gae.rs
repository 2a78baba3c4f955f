use crate::error::{Error, Result};

/// Generalized advantage estimation over one time-ordered trajectory segment.
///
/// `dones[t]` marks that the episode ended at step `t`, so neither the value
/// of `t + 1` nor its advantage leaks backwards. `bootstrap_value` is `V` of
/// the state following the last step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::shape("gae", n, values.len().max(dones.len())));
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shift to zero mean and scale to unit (population) standard deviation.
pub fn normalize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    for x in xs.iter_mut() {
        *x = (*x - mean) / (std + 1e-8);
    }
}

//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surprise_rl::density::VaeParams;
use surprise_rl::env::{Cell, GridLayout, Pos};
use surprise_rl::nn::{Activation, Mlp, MlpGrads};
use surprise_rl::ppo::{ActorCritic, PpoConfig, TrajectoryBatch};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-dimension Gaussian SM reward, evaluated straight from the definition
/// with compensated summation.
pub fn normal_reward_oracle(buffer: &[Vec<f64>], query: &[f64], floor: f64) -> f64 {
    let n = buffer.len() as f64;
    let mut total = KahanSum::default();
    for (i, &s) in query.iter().enumerate() {
        let mut sum = KahanSum::default();
        for row in buffer {
            sum.add(row[i]);
        }
        let mu = sum.value() / n;
        let mut sq = KahanSum::default();
        for row in buffer {
            sq.add((row[i] - mu).powi(2));
        }
        let sigma = (sq.value() / n).sqrt().max(floor);
        total.add(-(sigma.ln() + (s - mu).powi(2) / (2.0 * sigma * sigma)));
    }
    total.value()
}

#[derive(Default)]
struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum
    }
}

/// Latent batch statistics with `B + 1` denominators and a variance floor.
pub fn latent_stats_oracle(latents: &[Vec<f64>], sigma_floor: f64) -> (Vec<f64>, Vec<f64>) {
    let b = latents.len() as f64;
    let k = latents[0].len();
    let mu: Vec<f64> = (0..k)
        .map(|i| latents.iter().map(|z| z[i]).sum::<f64>() / (b + 1.0))
        .collect();
    let var = (0..k)
        .map(|i| {
            let v = latents.iter().map(|z| (mu[i] - z[i]).powi(2)).sum::<f64>() / (b + 1.0);
            v.max(sigma_floor * sigma_floor)
        })
        .collect();
    (mu, var)
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

const FD_STEP: f64 = 1e-5;

fn projected(mlp: &Mlp, x: &Array2<f64>, proj: &Array2<f64>) -> f64 {
    (&mlp.predict(x.view()).unwrap() * proj).sum()
}

/// Max relative error between backprop and central differences of
/// `L = Σ proj ∘ mlp(x)`, over every parameter and every input entry.
pub fn mlp_grad_check(mlp: &Mlp, x: &Array2<f64>, proj: &Array2<f64>) -> f64 {
    let (_, tape) = mlp.forward(x.view()).unwrap();
    let (grads, dx) = mlp.backward(&tape, proj.view()).unwrap();
    let mut worst = 0.0f64;
    let mut probe = mlp.clone();
    for l in 0..mlp.layers().len() {
        for idx in 0..mlp.layers()[l].weight.len() {
            let (r, c) = (
                idx / mlp.layers()[l].weight.ncols(),
                idx % mlp.layers()[l].weight.ncols(),
            );
            let base = mlp.layers()[l].weight[[r, c]];
            probe.layers_mut()[l].weight[[r, c]] = base + FD_STEP;
            let up = projected(&probe, x, proj);
            probe.layers_mut()[l].weight[[r, c]] = base - FD_STEP;
            let down = projected(&probe, x, proj);
            probe.layers_mut()[l].weight[[r, c]] = base;
            worst = worst.max(rel_err(grads.layers[l].weight[[r, c]], (up - down) / (2.0 * FD_STEP)));
        }
        for j in 0..mlp.layers()[l].bias.len() {
            let base = mlp.layers()[l].bias[j];
            probe.layers_mut()[l].bias[j] = base + FD_STEP;
            let up = projected(&probe, x, proj);
            probe.layers_mut()[l].bias[j] = base - FD_STEP;
            let down = projected(&probe, x, proj);
            probe.layers_mut()[l].bias[j] = base;
            worst = worst.max(rel_err(grads.layers[l].bias[j], (up - down) / (2.0 * FD_STEP)));
        }
    }
    let mut xp = x.clone();
    for r in 0..x.nrows() {
        for c in 0..x.ncols() {
            let base = x[[r, c]];
            xp[[r, c]] = base + FD_STEP;
            let up = projected(mlp, &xp, proj);
            xp[[r, c]] = base - FD_STEP;
            let down = projected(mlp, &xp, proj);
            xp[[r, c]] = base;
            worst = worst.max(rel_err(dx[[r, c]], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn param_mut(mlp: &mut Mlp, layer: usize, idx: usize) -> &mut f64 {
    let d = &mut mlp.layers_mut()[layer];
    let nw = d.weight.len();
    let cols = d.weight.ncols();
    if idx < nw {
        &mut d.weight[[idx / cols, idx % cols]]
    } else {
        &mut d.bias[idx - nw]
    }
}

fn grad_at(grads: &MlpGrads, layer: usize, idx: usize) -> f64 {
    let g = &grads.layers[layer];
    let nw = g.weight.len();
    let cols = g.weight.ncols();
    if idx < nw {
        g.weight[[idx / cols, idx % cols]]
    } else {
        g.bias[idx - nw]
    }
}

/// Max relative error of the VAE loss gradient over encoder and decoder parameters.
pub fn vae_grad_check(params: &VaeParams, batch: &Array2<f64>, noise: &Array2<f64>, beta: f64) -> f64 {
    let (_, grads) = params.loss_and_grads(batch.view(), noise.view(), beta).unwrap();
    let mut worst = 0.0f64;
    for encoder in [true, false] {
        let g = if encoder { &grads.encoder } else { &grads.decoder };
        for l in 0..g.layers.len() {
            for idx in 0..g.layers[l].weight.len() + g.layers[l].bias.len() {
                let shifted = |delta: f64| {
                    let mut p = params.clone();
                    let net = if encoder { &mut p.encoder } else { &mut p.decoder };
                    *param_mut(net, l, idx) += delta;
                    p.loss_and_grads(batch.view(), noise.view(), beta).unwrap().0.total
                };
                let numeric = (shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP);
                worst = worst.max(rel_err(grad_at(g, l, idx), numeric));
            }
        }
    }
    worst
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

pub fn random_mlp(rng: &mut ChaCha8Rng, sizes: &[usize], acts: &[Activation]) -> Mlp {
    let mut mlp = Mlp::init(sizes, acts, rng).unwrap();
    for layer in mlp.layers_mut() {
        layer.bias = Array1::from_shape_fn(layer.bias.len(), |_| rng.gen_range(-0.5..0.5));
    }
    mlp
}

/// `Σ_k γ^k r_{t+k}` to the end of the episode, plus the discounted bootstrap
/// when the episode was cut off rather than terminated.
pub fn monte_carlo_returns(rewards: &[f64], gamma: f64, bootstrap: Option<f64>) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| {
            let mut g = 0.0;
            let mut discount = 1.0;
            for r in &rewards[t..] {
                g += discount * r;
                discount *= gamma;
            }
            g + bootstrap.map_or(0.0, |v| discount * v)
        })
        .collect()
}

/// Trains PPO on a two-armed bandit (arm 0 pays Bernoulli(0.8), arm 1
/// Bernoulli(0.2)); returns the probability of arm 0 after each update.
pub fn bandit_run(updates: usize, batch: usize, seed: u64) -> Vec<f64> {
    let cfg = PpoConfig::default();
    let mut r = rng(seed);
    let mut agent = ActorCritic::new(1, 2, &cfg, &mut rng(seed + 1), &mut rng(seed + 2)).unwrap();
    let obs = Array2::from_elem((batch, 1), 1.0);
    let mut history = Vec::with_capacity(updates);
    for _ in 0..updates {
        let (actions, log_probs) = agent.sample(obs.view(), &mut r).unwrap();
        let rewards: Vec<f64> = actions
            .iter()
            .map(|&a| {
                let p = if a == 0 { 0.8 } else { 0.2 };
                if r.gen_bool(p) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let values = agent.values(obs.view()).unwrap();
        let traj = TrajectoryBatch {
            num_envs: batch,
            observations: obs.clone(),
            raw_observations: None,
            actions,
            task_rewards: rewards.clone(),
            sm_rewards: vec![0.0; batch],
            dones: vec![true; batch],
            log_probs,
            values,
            bootstrap_values: vec![0.0; batch],
        };
        let (adv, ret) = traj.advantages(&rewards, cfg.gamma, cfg.lambda).unwrap();
        agent.update(&traj, &adv, &ret, &cfg, &mut r).unwrap();
        history.push(agent.probabilities(obs.slice(ndarray::s![..1, ..])).unwrap()[[0, 0]]);
    }
    history
}

/// Shortest spawn-to-coin route over static cells, as `coin_seek` action ids.
pub fn shortest_route(grid: &GridLayout) -> Option<Vec<usize>> {
    let idx = |p: Pos| p.row as usize * grid.width + p.col as usize;
    let mut prev: Vec<Option<(Pos, usize)>> = vec![None; grid.cells.len()];
    let mut seen = vec![false; grid.cells.len()];
    let mut queue = VecDeque::from([grid.spawn]);
    seen[idx(grid.spawn)] = true;
    // left, right, jump (up), down
    let moves = [(0, -1, 0usize), (0, 1, 1), (-1, 0, 2), (1, 0, 4)];
    while let Some(p) = queue.pop_front() {
        if p == grid.coin {
            let mut route = Vec::new();
            let mut cur = p;
            while let Some((from, action)) = prev[idx(cur)] {
                route.push(action);
                cur = from;
            }
            route.reverse();
            return Some(route);
        }
        for &(dr, dc, action) in &moves {
            let q = Pos::new(p.row + dr, p.col + dc);
            if q.row < 0 || q.col < 0 || q.row as usize >= grid.height || q.col as usize >= grid.width {
                continue;
            }
            if !matches!(grid.get(q), Cell::Empty | Cell::Spawn | Cell::Coin) || seen[idx(q)] {
                continue;
            }
            seen[idx(q)] = true;
            prev[idx(q)] = Some((p, action));
            queue.push_back(q);
        }
    }
    None
}

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::gae::{gae, normalize};
use super::loss::{log_softmax, policy_loss, value_loss};
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Checkpoint, Mlp};

/// One rollout batch, stored time-major: index `t * num_envs + e`.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryBatch {
    pub num_envs: usize,
    /// Policy inputs (grayscale), `B × D`.
    pub observations: Array2<f64>,
    /// Unit-scaled RGB frames, `B × 3D`; only kept when a model needs them.
    pub raw_observations: Option<Array2<f64>>,
    pub actions: Vec<usize>,
    pub task_rewards: Vec<f64>,
    pub sm_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    /// Value of the state after the last step, per environment.
    pub bootstrap_values: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let b = self.len();
        let lens = [
            self.observations.nrows(),
            self.task_rewards.len(),
            self.sm_rewards.len(),
            self.dones.len(),
            self.log_probs.len(),
            self.values.len(),
        ];
        if lens.iter().any(|&l| l != b) {
            return Err(Error::shape("TrajectoryBatch", b, format!("{lens:?}")));
        }
        if self.num_envs == 0 || !b.is_multiple_of(self.num_envs) || self.bootstrap_values.len() != self.num_envs {
            return Err(Error::shape(
                "TrajectoryBatch envs",
                self.num_envs,
                self.bootstrap_values.len(),
            ));
        }
        Ok(())
    }

    /// GAE per environment stream over the supplied (combined) rewards.
    pub fn advantages(&self, rewards: &[f64], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check()?;
        if rewards.len() != self.len() {
            return Err(Error::shape("advantages rewards", self.len(), rewards.len()));
        }
        let n = self.num_envs;
        let mut adv = vec![0.0; self.len()];
        let mut ret = vec![0.0; self.len()];
        for e in 0..n {
            let idx: Vec<usize> = (e..self.len()).step_by(n).collect();
            let pick = |xs: &[f64]| idx.iter().map(|&i| xs[i]).collect::<Vec<_>>();
            let dones: Vec<bool> = idx.iter().map(|&i| self.dones[i]).collect();
            let (a, r) = gae(
                &pick(rewards),
                &pick(&self.values),
                &dones,
                self.bootstrap_values[e],
                gamma,
                lambda,
            )?;
            for (k, &i) in idx.iter().enumerate() {
                adv[i] = a[k];
                ret[i] = r[k];
            }
        }
        Ok((adv, ret))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Separate policy and value MLPs with their optimisers.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
    policy_opt: Adam,
    value_opt: Adam,
}

fn adam(cfg: &PpoConfig) -> AdamConfig {
    AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    }
}

impl ActorCritic {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        num_actions: usize,
        cfg: &PpoConfig,
        policy_rng: &mut R,
        value_rng: &mut R,
    ) -> Result<Self> {
        let h = cfg.hidden;
        let acts = [Activation::Tanh, Activation::Tanh, Activation::Identity];
        let mut policy = Mlp::init(&[obs_dim, h, h, num_actions], &acts, policy_rng)?;
        // near-uniform initial policy
        if let Some(last) = policy.layers_mut().last_mut() {
            last.weight *= 0.01;
        }
        let mut value = Mlp::init(&[obs_dim, h, h, 1], &acts, value_rng)?;
        // zero value head: no advantage signal until some return is observed
        if let Some(last) = value.layers_mut().last_mut() {
            last.weight.fill(0.0);
        }
        Ok(Self::from_networks(policy, value, cfg))
    }

    pub fn from_networks(policy: Mlp, value: Mlp, cfg: &PpoConfig) -> Self {
        ActorCritic {
            policy_opt: Adam::new(&policy, adam(cfg)),
            value_opt: Adam::new(&value, adam(cfg)),
            policy,
            value,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.policy.output_dim()
    }

    pub fn probabilities(&self, obs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(log_softmax(self.policy.predict(obs)?.view()).mapv(f64::exp))
    }

    pub fn values(&self, obs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.value.predict(obs)?.column(0).to_vec())
    }

    /// Sample one action per row; returns actions and their log-probabilities.
    pub fn sample<R: Rng + ?Sized>(&self, obs: ArrayView2<'_, f64>, rng: &mut R) -> Result<(Vec<usize>, Vec<f64>)> {
        let logp = log_softmax(self.policy.predict(obs)?.view());
        let mut actions = Vec::with_capacity(logp.nrows());
        let mut log_probs = Vec::with_capacity(logp.nrows());
        for row in logp.rows() {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (k, &lp) in row.iter().enumerate() {
                acc += lp.exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            actions.push(pick);
            log_probs.push(row[pick]);
        }
        Ok((actions, log_probs))
    }

    /// Several epochs of shuffled minibatch updates. Any failure restores the
    /// parameters held before the call.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &TrajectoryBatch,
        advantages: &[f64],
        returns: &[f64],
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let snapshot = self.clone();
        let result = self.update_inner(batch, advantages, returns, cfg, rng);
        if result.is_err() {
            *self = snapshot;
        }
        result
    }

    fn update_inner<R: Rng + ?Sized>(
        &mut self,
        batch: &TrajectoryBatch,
        advantages: &[f64],
        returns: &[f64],
        cfg: &PpoConfig,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        let b = batch.len();
        if advantages.len() != b || returns.len() != b || batch.observations.nrows() != b {
            return Err(Error::shape("ppo update", b, advantages.len()));
        }
        if b == 0 {
            return Err(Error::InsufficientData { needed: 1, have: 0 });
        }
        let mut adv = advantages.to_vec();
        normalize(&mut adv);

        let mb_size = b.div_ceil(cfg.minibatches);
        let mut order: Vec<usize> = (0..b).collect();
        let mut stats = UpdateStats::default();
        let mut count = 0.0;
        for _ in 0..cfg.epochs {
            order.shuffle(rng);
            for idx in order.chunks(mb_size) {
                let obs = batch.observations.select(Axis(0), idx);
                let actions: Vec<usize> = idx.iter().map(|&i| batch.actions[i]).collect();
                let old: Vec<f64> = idx.iter().map(|&i| batch.log_probs[i]).collect();
                let mb_adv: Vec<f64> = idx.iter().map(|&i| adv[i]).collect();
                let targets: Vec<f64> = idx.iter().map(|&i| returns[i]).collect();

                let (logits, tape) = self.policy.forward(obs.view())?;
                let (pl, dlogits) = policy_loss(logits.view(), &actions, &old, &mb_adv, cfg.clip_eps, cfg.entropy_coef);
                let (v, vtape) = self.value.forward(obs.view())?;
                let (vl, mut dv) = value_loss(v.view(), &targets);
                if !(pl.surrogate.is_finite() && pl.entropy.is_finite() && vl.is_finite()) {
                    return Err(Error::NonFiniteLoss("ppo"));
                }
                dv *= cfg.value_coef;

                let (mut pg, _) = self.policy.backward(&tape, dlogits.view())?;
                pg.clip_norm(cfg.max_grad_norm);
                self.policy_opt.step(&mut self.policy, &pg)?;
                let (mut vg, _) = self.value.backward(&vtape, dv.view())?;
                vg.clip_norm(cfg.max_grad_norm);
                self.value_opt.step(&mut self.value, &vg)?;

                stats.policy_loss += pl.surrogate;
                stats.value_loss += vl;
                stats.entropy += pl.entropy;
                stats.approx_kl += pl.approx_kl;
                stats.clip_fraction += pl.clip_fraction;
                count += 1.0;
            }
        }
        stats.policy_loss /= count;
        stats.value_loss /= count;
        stats.entropy /= count;
        stats.approx_kl /= count;
        stats.clip_fraction /= count;
        Ok(stats)
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint) {
        ck.add_mlp("policy", &self.policy);
        ck.add_mlp("value", &self.value);
    }

    /// Restore networks from a checkpoint; optimiser state starts fresh.
    pub fn from_checkpoint(ck: &Checkpoint, cfg: &PpoConfig) -> Result<Self> {
        let policy = ck.mlp("policy")?;
        let value = ck.mlp("value")?;
        if policy.input_dim() != value.input_dim() {
            return Err(Error::Checkpoint("policy and value input sizes differ".into()));
        }
        Ok(Self::from_networks(policy, value, cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn per_env_gae_respects_stream_layout() {
        // two envs interleaved; env 0 ends at t=1, env 1 never ends
        let batch = TrajectoryBatch {
            num_envs: 2,
            observations: Array2::zeros((4, 1)),
            raw_observations: None,
            actions: vec![0; 4],
            task_rewards: vec![1.0, 0.0, 1.0, 2.0],
            sm_rewards: vec![0.0; 4],
            dones: vec![false, false, true, false],
            log_probs: vec![0.0; 4],
            values: vec![0.0; 4],
            bootstrap_values: vec![100.0, 10.0],
        };
        let (adv, _) = batch.advantages(&batch.task_rewards, 1.0, 1.0).unwrap();
        assert_eq!(adv, vec![2.0, 12.0, 1.0, 12.0]);
    }

    #[test]
    fn sampling_is_seeded_and_in_range() {
        let cfg = PpoConfig::default();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let mut v = ChaCha8Rng::seed_from_u64(2);
        let ac = ActorCritic::new(6, 5, &cfg, &mut r, &mut v).unwrap();
        let obs = Array2::from_shape_fn((50, 6), |(i, j)| ((i + j) % 3) as f64);
        let a = ac.sample(obs.view(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = ac.sample(obs.view(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.0.iter().all(|&x| x < 5));
        let p = ac.probabilities(obs.view()).unwrap();
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 0.05));
    }

    #[test]
    fn failed_update_restores_parameters() {
        let cfg = PpoConfig::default();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let mut v = ChaCha8Rng::seed_from_u64(2);
        let mut ac = ActorCritic::new(2, 2, &cfg, &mut r, &mut v).unwrap();
        let before = ac.clone();
        let batch = TrajectoryBatch {
            num_envs: 1,
            observations: Array2::ones((2, 2)),
            raw_observations: None,
            actions: vec![0, 1],
            task_rewards: vec![0.0; 2],
            sm_rewards: vec![0.0; 2],
            dones: vec![false, true],
            log_probs: vec![-0.7, -0.7],
            values: vec![0.0; 2],
            bootstrap_values: vec![0.0],
        };
        let err = ac.update(&batch, &[1.0, -1.0], &[f64::NAN, 0.0], &cfg, &mut r);
        assert!(err.is_err());
        assert_eq!(ac, before);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let cfg = PpoConfig::default();
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut v = ChaCha8Rng::seed_from_u64(5);
        let ac = ActorCritic::new(3, 5, &cfg, &mut r, &mut v).unwrap();
        let mut ck = Checkpoint::new();
        ac.add_to_checkpoint(&mut ck);
        let back = ActorCritic::from_checkpoint(&Checkpoint::parse(&ck.to_text()).unwrap(), &cfg).unwrap();
        assert_eq!(back, ac);
    }
}

//! Online VAE density model.
//!
//! The VAE is trained one step per rollout batch. Its encoder means for that
//! batch define a diagonal Gaussian over latent space, and each observation's
//! surprise reward is the log density of its own latent code under that Gaussian.

use std::f64::consts::PI;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normal::SIGMA_FLOOR;
use crate::error::{Error, Result};
use crate::nn::{gaussian_sample_batch, Activation, Adam, AdamConfig, Checkpoint, Mlp, MlpGrads};

/// Denominator used for the latent batch mean and spread.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentDenominator {
    /// `B + 1`: a zero pseudo-observation is folded into the statistics.
    BatchPlusOne,
    Batch,
}

/// How the batch spread statistic is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSpread {
    /// The averaged squared deviation is the variance.
    Variance,
    /// The averaged squared deviation is the standard deviation; variance is its square.
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub beta: f64,
    pub lr: f64,
    pub denominator: LatentDenominator,
    pub spread: LatentSpread,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig {
            latent_dim: 8,
            hidden: 64,
            beta: 1.0,
            lr: 3e-4,
            denominator: LatentDenominator::BatchPlusOne,
            spread: LatentSpread::Variance,
        }
    }
}

/// Encoder `D → 2L` (mean, log-variance) and decoder `L → D`.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub latent_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeLoss {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads {
    pub encoder: MlpGrads,
    pub decoder: MlpGrads,
}

impl VaeParams {
    pub fn init<R: Rng + ?Sized>(input_dim: usize, cfg: &VaeConfig, rng: &mut R) -> Result<Self> {
        let (h, l) = (cfg.hidden, cfg.latent_dim);
        let encoder = Mlp::init(
            &[input_dim, h, h, 2 * l],
            &[Activation::Tanh, Activation::Tanh, Activation::Identity],
            rng,
        )?;
        let decoder = Mlp::init(
            &[l, h, h, input_dim],
            &[Activation::Tanh, Activation::Tanh, Activation::Identity],
            rng,
        )?;
        Self::new(encoder, decoder)
    }

    pub fn new(encoder: Mlp, decoder: Mlp) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim {
            return Err(Error::shape(
                "VaeParams encoder output",
                2 * latent_dim,
                encoder.output_dim(),
            ));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "VaeParams decoder output",
                encoder.input_dim(),
                decoder.output_dim(),
            ));
        }
        Ok(VaeParams {
            encoder,
            decoder,
            latent_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Posterior means `E[q(z|s)]`, one row per observation.
    pub fn encode_mean(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let out = self.encoder.predict(batch)?;
        Ok(out.slice(s![.., ..self.latent_dim]).to_owned())
    }

    /// Negative ELBO with a squared-error reconstruction term, averaged over the batch:
    /// `mean_j ‖x̂_j − x_j‖² + β · mean_j KL(q(z|x_j) ‖ N(0, I))`.
    pub fn loss_and_grads(
        &self,
        batch: ArrayView2<'_, f64>,
        noise: ArrayView2<'_, f64>,
        beta: f64,
    ) -> Result<(VaeLoss, VaeGrads)> {
        let b = batch.nrows();
        let l = self.latent_dim;
        if noise.shape() != [b, l] {
            return Err(Error::shape(
                "vae noise",
                format!("[{b}, {l}]"),
                format!("{:?}", noise.shape()),
            ));
        }
        if b == 0 {
            return Err(Error::InsufficientData { needed: 1, have: 0 });
        }
        let bf = b as f64;
        let (enc_out, enc_tape) = self.encoder.forward(batch)?;
        let mean = enc_out.slice(s![.., ..l]);
        let log_var = enc_out.slice(s![.., l..]);
        let z = gaussian_sample_batch(mean, log_var, noise)?;
        let (recon, dec_tape) = self.decoder.forward(z.view())?;

        let diff = &recon - &batch;
        let reconstruction = diff.iter().map(|d| d * d).sum::<f64>() / bf;
        let kl = Zip::from(mean)
            .and(log_var)
            .fold(0.0, |acc, &m, &lv| acc - 0.5 * (1.0 + lv - m * m - lv.exp()))
            / bf;
        let total = reconstruction + beta * kl;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss("vae"));
        }

        let d_recon = diff * (2.0 / bf);
        let (decoder_grads, dz) = self.decoder.backward(&dec_tape, d_recon.view())?;
        let d_mean = Zip::from(&dz).and(mean).map_collect(|&g, &m| g + beta * m / bf);
        let d_log_var = Zip::from(&dz)
            .and(log_var)
            .and(noise)
            .map_collect(|&g, &lv, &n| g * n * 0.5 * (lv / 2.0).exp() + beta * 0.5 * (lv.exp() - 1.0) / bf);
        let d_enc = concatenate(Axis(1), &[d_mean.view(), d_log_var.view()]).expect("matching rows");
        let (encoder_grads, _) = self.encoder.backward(&enc_tape, d_enc.view())?;

        Ok((
            VaeLoss {
                total,
                reconstruction,
                kl,
            },
            VaeGrads {
                encoder: encoder_grads,
                decoder: decoder_grads,
            },
        ))
    }

    pub fn add_to_checkpoint(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.add_mlp(&format!("{prefix}.encoder"), &self.encoder);
        ck.add_mlp(&format!("{prefix}.decoder"), &self.decoder);
    }

    pub fn from_checkpoint(ck: &Checkpoint, prefix: &str) -> Result<Self> {
        Self::new(
            ck.mlp(&format!("{prefix}.encoder"))?,
            ck.mlp(&format!("{prefix}.decoder"))?,
        )
    }
}

/// VAE plus its optimiser state, trained online one batch at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Vae {
    pub params: VaeParams,
    pub config: VaeConfig,
    encoder_opt: Adam,
    decoder_opt: Adam,
}

impl Vae {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, config: VaeConfig, rng: &mut R) -> Result<Self> {
        let params = VaeParams::init(input_dim, &config, rng)?;
        let adam = AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        };
        Ok(Vae {
            encoder_opt: Adam::new(&params.encoder, adam),
            decoder_opt: Adam::new(&params.decoder, adam),
            params,
            config,
        })
    }

    /// One gradient step on `batch` with caller-supplied reparameterisation noise.
    pub fn update(&mut self, batch: ArrayView2<'_, f64>, noise: ArrayView2<'_, f64>) -> Result<VaeLoss> {
        let (loss, grads) = self.params.loss_and_grads(batch, noise, self.config.beta)?;
        if !grads.encoder.is_finite() || !grads.decoder.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.encoder_opt.step(&mut self.params.encoder, &grads.encoder)?;
        self.decoder_opt.step(&mut self.params.decoder, &grads.decoder)?;
        Ok(loss)
    }

    pub fn latent_stats(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, LatentBatchStats)> {
        let latents = self.params.encode_mean(batch)?;
        let stats = batch_latent_stats(latents.view(), self.config.denominator, self.config.spread, SIGMA_FLOOR)?;
        Ok((latents, stats))
    }
}

/// Diagonal Gaussian over the latent codes of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatchStats {
    pub mu: Array1<f64>,
    pub sigma_sq: Array1<f64>,
    pub batch_size: usize,
}

/// `μ = Σ_j z_j / (B+1)`, `σ² = Σ_j (μ − z_j)² / (B+1)` (or `/B` with
/// [`LatentDenominator::Batch`]), variance floored at `sigma_floor²`.
pub fn batch_latent_stats(
    latents: ArrayView2<'_, f64>,
    denominator: LatentDenominator,
    spread: LatentSpread,
    sigma_floor: f64,
) -> Result<LatentBatchStats> {
    let b = latents.nrows();
    if b == 0 {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let denom = match denominator {
        LatentDenominator::BatchPlusOne => (b + 1) as f64,
        LatentDenominator::Batch => b as f64,
    };
    let mu = latents.sum_axis(Axis(0)) / denom;
    let mut dev = Array1::<f64>::zeros(latents.ncols());
    for row in latents.rows() {
        Zip::from(&mut dev)
            .and(&row)
            .and(&mu)
            .for_each(|d, &z, &m| *d += (m - z) * (m - z));
    }
    let floor_sq = sigma_floor * sigma_floor;
    let sigma_sq = dev.mapv(|d| {
        let v = match spread {
            LatentSpread::Variance => d / denom,
            LatentSpread::StdDev => (d / denom).powi(2),
        };
        v.max(floor_sq)
    });
    Ok(LatentBatchStats {
        mu,
        sigma_sq,
        batch_size: b,
    })
}

impl LatentBatchStats {
    /// Full diagonal-Gaussian log density `−½ Σ_i [log(2π σ²_i) + (z_i − μ_i)²/σ²_i]`.
    pub fn log_prob(&self, z: ArrayView1<'_, f64>) -> Result<f64> {
        if z.len() != self.mu.len() {
            return Err(Error::shape("vae_sm_reward", self.mu.len(), z.len()));
        }
        Ok(-0.5
            * Zip::from(&z)
                .and(&self.mu)
                .and(&self.sigma_sq)
                .fold(0.0, |acc, &zi, &m, &v| {
                    acc + (2.0 * PI * v).ln() + (zi - m) * (zi - m) / v
                }))
    }

    pub fn log_probs(&self, latents: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        latents.rows().into_iter().map(|r| self.log_prob(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::{arr1, arr2, Array1};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const PLUS_ONE: LatentDenominator = LatentDenominator::BatchPlusOne;
    const VAR: LatentSpread = LatentSpread::Variance;

    fn stats(mu: &[f64], var: &[f64]) -> LatentBatchStats {
        LatentBatchStats {
            mu: Array1::from(mu.to_vec()),
            sigma_sq: Array1::from(var.to_vec()),
            batch_size: 1,
        }
    }

    #[test]
    fn single_latent_halves() {
        let st = batch_latent_stats(arr2(&[[2.0]]).view(), PLUS_ONE, VAR, SIGMA_FLOOR).unwrap();
        assert_eq!(st.mu[0], 1.0);
        assert_eq!(st.sigma_sq[0], 0.5);
    }

    #[test]
    fn two_latents_hand_case() {
        let st = batch_latent_stats(arr2(&[[0.0], [2.0]]).view(), PLUS_ONE, VAR, SIGMA_FLOOR).unwrap();
        assert!((st.mu[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((st.sigma_sq[0] - 20.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn equal_latents_are_not_degenerate_with_plus_one() {
        // μ = Bz/(B+1) = 0.4 ≠ z, so the spread is B·(μ − z)²/(B+1) rather than zero
        let z = Array2::from_elem((4, 1), 0.5);
        let st = batch_latent_stats(z.view(), PLUS_ONE, VAR, SIGMA_FLOOR).unwrap();
        assert!((st.sigma_sq[0] - 4.0 * 0.01 / 5.0).abs() < 1e-15);
        let zero = Array2::zeros((4, 2));
        let st = batch_latent_stats(zero.view(), PLUS_ONE, VAR, SIGMA_FLOOR).unwrap();
        assert!(st.sigma_sq.iter().all(|&v| v == SIGMA_FLOOR * SIGMA_FLOOR));
    }

    #[test]
    fn batch_denominator_and_stddev_variants() {
        let z = arr2(&[[0.0], [2.0]]);
        let st = batch_latent_stats(z.view(), LatentDenominator::Batch, VAR, SIGMA_FLOOR).unwrap();
        assert_eq!((st.mu[0], st.sigma_sq[0]), (1.0, 1.0));
        let st = batch_latent_stats(z.view(), PLUS_ONE, LatentSpread::StdDev, SIGMA_FLOOR).unwrap();
        assert!((st.sigma_sq[0] - (20.0f64 / 27.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(batch_latent_stats(Array2::zeros((0, 3)).view(), PLUS_ONE, VAR, SIGMA_FLOOR).is_err());
    }

    #[test]
    fn log_prob_examples() {
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        let r0 = stats(&[0.0], &[1.0]).log_prob(arr1(&[0.0]).view()).unwrap();
        assert!((r0 + half_log_2pi).abs() < 1e-15);
        assert!((r0 - (-0.918_938_533_204_672_7)).abs() < 1e-15);
        let r1 = stats(&[0.0], &[1.0]).log_prob(arr1(&[1.0]).view()).unwrap();
        assert!((r1 - (-1.418_938_533_204_672_7)).abs() < 1e-15);
        assert!(stats(&[0.0], &[1.0]).log_prob(arr1(&[1.0, 2.0]).view()).is_err());
    }

    #[test]
    fn log_prob_peaks_at_mean() {
        let st = stats(&[0.3, -1.0, 2.0], &[0.5, 2.0, 0.1]);
        let peak = st.log_prob(st.mu.view()).unwrap();
        for dz in [-0.1, 0.05, 0.4] {
            let z = &st.mu + dz;
            assert!(st.log_prob(z.view()).unwrap() < peak);
        }
    }

    fn zero_encoder(d: usize, l: usize, bias: Array1<f64>) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((d, 2 * l)),
            bias,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn zero_weight_encoder_returns_bias_means() {
        let enc = zero_encoder(3, 2, arr1(&[0.5, -1.0, 0.1, 0.2]));
        let dec = Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((2, 3)),
            bias: Array1::zeros(3),
            activation: Activation::Identity,
        }])
        .unwrap();
        let vae = VaeParams::new(enc, dec).unwrap();
        let z = vae.encode_mean(Array2::from_elem((4, 3), 7.0).view()).unwrap();
        for row in z.rows() {
            assert_eq!(row.to_vec(), vec![0.5, -1.0]);
        }
    }

    #[test]
    fn standard_posterior_has_zero_kl_and_perfect_decoder_leaves_only_kl() {
        let x = arr2(&[[0.2, 0.4, 0.6], [0.2, 0.4, 0.6]]);
        let enc = zero_encoder(3, 2, Array1::zeros(4));
        let dec = Mlp::from_layers(vec![Dense {
            weight: Array2::zeros((2, 3)),
            bias: arr1(&[0.2, 0.4, 0.6]),
            activation: Activation::Identity,
        }])
        .unwrap();
        let vae = VaeParams::new(enc, dec).unwrap();
        let noise = arr2(&[[0.3, -0.2], [1.1, 0.0]]);
        let (loss, _) = vae.loss_and_grads(x.view(), noise.view(), 1.0).unwrap();
        assert_eq!(loss.kl, 0.0);
        assert_eq!(loss.reconstruction, 0.0);
        assert_eq!(loss.total, loss.kl);

        let enc = zero_encoder(3, 2, arr1(&[0.5, 0.0, -0.3, 0.2]));
        let vae = VaeParams::new(enc, vae.decoder.clone()).unwrap();
        let (loss, _) = vae.loss_and_grads(x.view(), noise.view(), 1.0).unwrap();
        assert!(loss.kl > 0.0);
        assert_eq!(loss.total, loss.kl);
    }

    #[test]
    fn shape_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = VaeConfig {
            latent_dim: 2,
            hidden: 4,
            ..VaeConfig::default()
        };
        let vae = VaeParams::init(5, &cfg, &mut rng).unwrap();
        assert!(vae
            .loss_and_grads(Array2::zeros((3, 5)).view(), Array2::zeros((3, 3)).view(), 1.0)
            .is_err());
        let wrong = Mlp::init(&[5, 3], &[Activation::Identity], &mut rng).unwrap();
        assert!(VaeParams::new(wrong, vae.decoder.clone()).is_err());
    }

    fn toy_data(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        // two latent factors mixed into 12 observed dimensions
        let mix = Array2::from_shape_fn((2, 12), |(i, j)| ((i * 5 + j * 3) % 7) as f64 / 7.0 - 0.4);
        let factors = Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(rng));
        factors.dot(&mix).mapv(|v: f64| 0.5 + 0.3 * v)
    }

    fn train(seed: u64, steps: usize) -> (Vae, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = toy_data(&mut rng, 64);
        let cfg = VaeConfig {
            latent_dim: 2,
            hidden: 16,
            ..VaeConfig::default()
        };
        let mut vae = Vae::new(12, cfg, &mut rng).unwrap();
        let mut losses = Vec::new();
        for _ in 0..steps {
            let noise = Array2::from_shape_fn((64, 2), |_| StandardNormal.sample(&mut rng));
            losses.push(vae.update(data.view(), noise.view()).unwrap().total);
        }
        (vae, losses)
    }

    #[test]
    fn online_training_reduces_loss() {
        let (_, losses) = train(21, 200);
        let smooth = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let start = smooth(&losses[..20]);
        let end = smooth(&losses[180..]);
        assert!(end < 0.8 * start, "loss {start} -> {end}");
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let (a, la) = train(33, 25);
        let (b, lb) = train(33, 25);
        assert_eq!(a, b);
        assert!(la.iter().zip(&lb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

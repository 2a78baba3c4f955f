use ndarray::{Array1, Array2, Zip};

use super::mlp::{Mlp, MlpGrads};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

/// Adam state for one `Mlp`; moment shapes mirror the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Moments>,
    second: Vec<Moments>,
}

impl Adam {
    pub fn new(mlp: &Mlp, config: AdamConfig) -> Self {
        let zeros = || {
            mlp.layers()
                .iter()
                .map(|l| Moments {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect::<Vec<_>>()
        };
        Adam {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update. Non-finite gradients leave everything untouched.
    pub fn step(&mut self, mlp: &mut Mlp, grads: &MlpGrads) -> Result<()> {
        if grads.layers.len() != self.first.len() {
            return Err(Error::shape("Adam::step layers", self.first.len(), grads.layers.len()));
        }
        for (g, m) in grads.layers.iter().zip(&self.first) {
            if g.weight.raw_dim() != m.weight.raw_dim() || g.bias.raw_dim() != m.bias.raw_dim() {
                return Err(Error::shape(
                    "Adam::step tensor",
                    format!("{:?}", m.weight.shape()),
                    format!("{:?}", g.weight.shape()),
                ));
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: &f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in mlp
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            Zip::from(&mut layer.weight)
                .and(&mut m.weight)
                .and(&mut v.weight)
                .and(&g.weight)
                .for_each(update);
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(update);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Mlp {
        Mlp::init(
            &[3, 4, 2],
            &[Activation::Tanh, Activation::Identity],
            &mut ChaCha8Rng::seed_from_u64(8),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut mlp = net();
        let before = mlp.clone();
        let mut opt = Adam::new(&mlp, AdamConfig::default());
        let zero = MlpGrads::zeros_like(&mlp);
        opt.step(&mut mlp, &zero).unwrap();
        assert_eq!(mlp, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut mlp = net();
        let before = mlp.clone();
        let cfg = AdamConfig::default();
        let mut opt = Adam::new(&mlp, cfg);
        let mut grads = MlpGrads::zeros_like(&mlp);
        let g = 0.37;
        for l in &mut grads.layers {
            l.weight.fill(g);
            l.bias.fill(-g);
        }
        opt.step(&mut mlp, &grads).unwrap();
        // m̂ = g, v̂ = g², so Δ = -lr · g / (|g| + ε)
        let delta = cfg.lr * g / (g + cfg.eps);
        for (a, b) in mlp.layers().iter().zip(before.layers()) {
            for (x, y) in a.weight.iter().zip(b.weight.iter()) {
                assert!((x - (y - delta)).abs() < 1e-15);
            }
            for (x, y) in a.bias.iter().zip(b.bias.iter()) {
                assert!((x - (y + delta)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic() {
        let mut grads = MlpGrads::zeros_like(&net());
        grads.layers[0].weight[[1, 2]] = 0.5;
        let run = || {
            let mut mlp = net();
            let mut opt = Adam::new(&mlp, AdamConfig::default());
            opt.step(&mut mlp, &grads).unwrap();
            opt.step(&mut mlp, &grads).unwrap();
            (mlp, opt)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut mlp = net();
        let before = mlp.clone();
        let mut opt = Adam::new(&mlp, AdamConfig::default());
        let mut grads = MlpGrads::zeros_like(&mlp);
        grads.layers[1].bias[0] = f64::NAN;
        assert!(matches!(opt.step(&mut mlp, &grads), Err(Error::NonFiniteGradient)));
        assert_eq!(mlp, before);
        assert_eq!(opt.step_count(), 0);
    }
}

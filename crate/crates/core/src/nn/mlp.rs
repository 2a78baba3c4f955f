use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
    /// Row-wise softmax; only meaningful on the output layer.
    Softmax,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            "softmax" => Activation::Softmax,
            _ => return None,
        })
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Identity => {}
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|v| (v - max).exp());
                    let sum = row.sum();
                    row /= sum;
                }
            }
        }
    }

    /// Map `dL/dy` to `dL/dz` given the activation output `y`.
    fn backprop(self, y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Tanh => Zip::from(dy).and(y).map_collect(|&g, &y| g * (1.0 - y * y)),
            Activation::Relu => Zip::from(dy).and(y).map_collect(|&g, &y| if y > 0.0 { g } else { 0.0 }),
            Activation::Identity => dy.clone(),
            Activation::Softmax => {
                let dot = (dy * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                y * &(dy - &dot)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `fan_in × fan_out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// A fixed-topology multilayer perceptron.
///
/// Every mutation assigns a new version number, which gradient tapes record so
/// that a tape can't be replayed against parameters it didn't see.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct GradTape {
    version: u64,
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrad>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weight.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weight *= factor;
            g.bias *= factor;
        }
    }

    /// Rescale so the global norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
        norm
    }
}

impl Mlp {
    /// Build from explicit layers, checking that shapes compose.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("an MLP needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape("Mlp bias", l.fan_out(), l.bias.len()));
            }
            if let Some(next) = layers.get(i + 1) {
                if next.fan_in() != l.fan_out() {
                    return Err(Error::shape("Mlp layer chain", l.fan_out(), next.fan_in()));
                }
            }
        }
        Ok(Mlp {
            layers,
            version: fresh_version(),
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero biases.
    ///
    /// `sizes` lists every width from input to output; `activations` has one
    /// entry per layer.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if sizes.len() != activations.len() + 1 {
            return Err(Error::shape(
                "Mlp::init activations",
                sizes.len() - 1,
                activations.len(),
            ));
        }
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Dense {
                    weight: Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..=bound)),
                    bias: Array1::zeros(w[1]),
                    activation,
                }
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Mutable access to the parameters. Invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    fn run(&self, x: ArrayView2<'_, f64>, mut keep: Option<&mut GradTape>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("Mlp::forward input", self.input_dim(), x.ncols()));
        }
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weight) + &layer.bias;
            layer.activation.apply(&mut z);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteOutput { layer: i });
            }
            if let Some(tape) = keep.as_deref_mut() {
                tape.inputs.push(h);
                tape.outputs.push(z.clone());
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass recording what `backward` needs.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, GradTape)> {
        let mut tape = GradTape {
            version: self.version,
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let y = self.run(x, Some(&mut tape))?;
        Ok((y, tape))
    }

    /// Forward pass without a tape.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.run(x, None)
    }

    /// Reverse-mode gradients of a scalar loss given `dL/dy`. Returns parameter
    /// gradients and `dL/dx`.
    pub fn backward(&self, tape: &GradTape, dy: ArrayView2<'_, f64>) -> Result<(MlpGrads, Array2<f64>)> {
        if tape.version != self.version || tape.outputs.len() != self.layers.len() {
            return Err(Error::StaleTape);
        }
        let last = &tape.outputs[tape.outputs.len() - 1];
        if dy.shape() != last.shape() {
            return Err(Error::shape(
                "Mlp::backward upstream",
                format!("{:?}", last.shape()),
                format!("{:?}", dy.shape()),
            ));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = dy.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer.activation.backprop(&tape.outputs[i], &g);
            grads.push(LayerGrad {
                weight: tape.inputs[i].t().dot(&dz),
                bias: dz.sum_axis(Axis(0)),
            });
            g = dz.dot(&layer.weight.t());
        }
        grads.reverse();
        Ok((MlpGrads { layers: grads }, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight,
            bias,
            activation,
        }])
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = single(Array2::eye(3), Array1::zeros(3), Activation::Identity);
        let x = arr2(&[[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]]);
        assert_eq!(net.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_weights_emit_bias() {
        let b = arr1(&[0.3, -0.7]);
        let net = single(Array2::zeros((4, 2)), b.clone(), Activation::Identity);
        let y = net.predict(Array2::from_elem((3, 4), 9.0).view()).unwrap();
        for row in y.rows() {
            assert_eq!(row, b);
        }
    }

    #[test]
    fn linear_sum_loss_gradients() {
        let net = single(Array2::eye(2), Array1::zeros(2), Activation::Identity);
        let x = arr2(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let (y, tape) = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(&tape, Array2::ones(y.raw_dim()).view()).unwrap();
        // dL/dW[i][j] = Σ_b x[b][i]
        assert_eq!(g.layers[0].weight, arr2(&[[9.0, 9.0], [12.0, 12.0]]));
        assert_eq!(g.layers[0].bias, arr1(&[3.0, 3.0]));
        assert_eq!(dx, Array2::ones((3, 2)));
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[3, 5, 2], &[Activation::Tanh, Activation::Softmax], &mut rng).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64 * 0.1);
        let (y, tape) = net.forward(x.view()).unwrap();
        let (g, dx) = net.backward(&tape, Array2::zeros(y.raw_dim()).view()).unwrap();
        assert_eq!(g.global_norm(), 0.0);
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::init(&[4, 8, 6], &[Activation::Relu, Activation::Softmax], &mut rng).unwrap();
        let x = Array2::from_shape_fn((10, 4), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let y = net.predict(x.view()).unwrap();
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn stale_tape_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Mlp::init(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
        let (y, tape) = net.forward(Array2::ones((1, 2)).view()).unwrap();
        net.layers_mut()[0].bias[0] += 1.0;
        assert!(matches!(net.backward(&tape, y.view()), Err(Error::StaleTape)));
        let other = Mlp::init(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
        assert!(matches!(other.backward(&tape, y.view()), Err(Error::StaleTape)));
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::init(&[3, 2], &[Activation::Identity], &mut rng).unwrap();
        assert!(matches!(
            net.predict(Array2::zeros((1, 4)).view()),
            Err(Error::Shape { .. })
        ));
        let bad = vec![
            Dense {
                weight: Array2::zeros((3, 4)),
                bias: Array1::zeros(4),
                activation: Activation::Tanh,
            },
            Dense {
                weight: Array2::zeros((5, 1)),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
        ];
        assert!(Mlp::from_layers(bad).is_err());
    }

    #[test]
    fn non_finite_output_names_layer() {
        let net = Mlp::from_layers(vec![
            Dense {
                weight: Array2::eye(1),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
            Dense {
                weight: arr2(&[[f64::MAX]]),
                bias: Array1::zeros(1),
                activation: Activation::Identity,
            },
        ])
        .unwrap();
        let err = net.predict(arr2(&[[10.0]]).view()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteOutput { layer: 1 }));
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = Mlp::init(&[16, 8], &[Activation::Tanh], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Mlp::init(&[16, 8], &[Activation::Tanh], &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= 0.25));
    }
}

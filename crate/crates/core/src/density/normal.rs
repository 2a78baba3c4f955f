//! Per-pixel independent Gaussian fitted over a FIFO buffer of recent frames.

use std::collections::VecDeque;

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};

/// Buffer capacity, in observations, per observation of the rollout batch.
pub const BUFFER_BATCHES: usize = 20;
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ObsBuffer {
    capacity: usize,
    dim: usize,
    rows: VecDeque<Vec<f64>>,
}

impl ObsBuffer {
    pub fn new(capacity: usize, dim: usize) -> Self {
        ObsBuffer {
            capacity,
            dim,
            rows: VecDeque::with_capacity(capacity),
        }
    }

    /// Buffer holding the last `20 × minibatch_size` observations.
    pub fn for_minibatch(minibatch_size: usize, dim: usize) -> Self {
        Self::new(BUFFER_BATCHES * minibatch_size, dim)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.iter().map(Vec::as_slice)
    }

    /// Append a `B × D` batch, evicting the oldest rows beyond capacity.
    pub fn push(&mut self, batch: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.dim {
            return Err(Error::shape("ObsBuffer::push", self.dim, batch.ncols()));
        }
        let skip = batch.nrows().saturating_sub(self.capacity);
        for row in batch.rows().into_iter().skip(skip) {
            if self.rows.len() == self.capacity {
                self.rows.pop_front();
            }
            self.rows.push_back(row.to_vec());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalDensityParams {
    pub mu: Array1<f64>,
    pub sigma: Array1<f64>,
    /// Dimensions whose standard deviation was raised to the floor.
    pub floored: usize,
}

/// Sample mean and population standard deviation per dimension.
pub fn fit_params(buffer: &ObsBuffer, sigma_floor: f64) -> Result<NormalDensityParams> {
    let n = buffer.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, have: n });
    }
    let mut mu = Array1::<f64>::zeros(buffer.dim);
    for row in buffer.rows() {
        mu.iter_mut().zip(row).for_each(|(m, &x)| *m += x);
    }
    mu /= n as f64;
    let mut var = Array1::<f64>::zeros(buffer.dim);
    for row in buffer.rows() {
        var.iter_mut()
            .zip(row.iter().zip(mu.iter()))
            .for_each(|(v, (&x, &m))| *v += (x - m) * (x - m));
    }
    let mut floored = 0;
    let sigma = var.mapv(|v| {
        let s = (v / n as f64).sqrt();
        if s < sigma_floor {
            floored += 1;
            sigma_floor
        } else {
            s
        }
    });
    Ok(NormalDensityParams { mu, sigma, floored })
}

impl NormalDensityParams {
    /// `-Σ_i [log σ_i + (s_i - μ_i)² / (2σ_i²)]`; the `½ log 2π` constant is omitted.
    pub fn sm_reward(&self, s: &[f64]) -> Result<f64> {
        if s.len() != self.mu.len() {
            return Err(Error::shape("sm_reward", self.mu.len(), s.len()));
        }
        Ok(-s
            .iter()
            .zip(self.mu.iter().zip(self.sigma.iter()))
            .map(|(&x, (&m, &sd))| sd.ln() + (x - m) * (x - m) / (2.0 * sd * sd))
            .sum::<f64>())
    }

    pub fn sm_rewards(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        batch
            .rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.sm_reward(s),
                None => self.sm_reward(&r.to_vec()),
            })
            .collect()
    }
}

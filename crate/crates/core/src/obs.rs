//! Observation preprocessing ahead of the density models and the policy.

use ndarray::{Array2, ArrayView1};

use crate::env::Observation;
use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA: (f64, f64, f64) = (0.299, 0.587, 0.114);

/// Flat grayscale frame with every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayObservation(Vec<f64>);

impl GrayObservation {
    pub fn new(values: Vec<f64>) -> Self {
        GrayObservation(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn to_grayscale(obs: &Observation, weights: (f64, f64, f64)) -> GrayObservation {
    let (wr, wg, wb) = weights;
    GrayObservation(
        obs.pixels()
            .chunks_exact(3)
            .map(|p| ((wr * p[0] as f64 + wg * p[1] as f64 + wb * p[2] as f64) / 255.0).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Raw RGB scaled to `[0, 1]`, channel-interleaved. Used by the VAE path.
pub fn to_unit_rgb(obs: &Observation) -> Vec<f64> {
    obs.pixels().iter().map(|&v| v as f64 / 255.0).collect()
}

/// Stack observations row-wise. `dim` fixes the column count so that an
/// empty batch still has a well-defined shape.
pub fn flatten_batch(batch: &[GrayObservation], dim: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((batch.len(), dim));
    for (j, obs) in batch.iter().enumerate() {
        if obs.len() != dim {
            return Err(Error::shape("flatten_batch", dim, obs.len()));
        }
        out.row_mut(j).assign(&ArrayView1::from(obs.values()));
    }
    Ok(out)
}

pub fn unflatten_batch(matrix: &Array2<f64>) -> Vec<GrayObservation> {
    matrix.rows().into_iter().map(|r| GrayObservation(r.to_vec())).collect()
}

//! Small dense-network engine shared by the policy, value and VAE networks.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedTensor};
pub use mlp::{Activation, Dense, GradTape, LayerGrad, Mlp, MlpGrads};

use ndarray::{Array2, ArrayView2, Zip};

use crate::error::{Error, Result};

/// Reparameterised draw `mean + exp(log_var / 2) ⊙ noise`.
pub fn gaussian_sample(mean: &[f64], log_var: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
    if mean.len() != log_var.len() || mean.len() != noise.len() {
        return Err(Error::shape(
            "gaussian_sample",
            mean.len(),
            log_var.len().max(noise.len()),
        ));
    }
    Ok(mean
        .iter()
        .zip(log_var)
        .zip(noise)
        .map(|((m, lv), n)| m + (lv / 2.0).exp() * n)
        .collect())
}

/// Batched form of [`gaussian_sample`].
pub fn gaussian_sample_batch(
    mean: ArrayView2<'_, f64>,
    log_var: ArrayView2<'_, f64>,
    noise: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if mean.shape() != log_var.shape() || mean.shape() != noise.shape() {
        return Err(Error::shape(
            "gaussian_sample_batch",
            format!("{:?}", mean.shape()),
            format!("{:?}/{:?}", log_var.shape(), noise.shape()),
        ));
    }
    Ok(Zip::from(mean)
        .and(log_var)
        .and(noise)
        .map_collect(|m, lv, n| m + (lv / 2.0).exp() * n))
}

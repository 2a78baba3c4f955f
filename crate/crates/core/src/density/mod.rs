//! Density models behind the surprise-minimizing reward.

pub mod normal;
pub mod vae;

pub use normal::{fit_params, NormalDensityParams, ObsBuffer, BUFFER_BATCHES, SIGMA_FLOOR};
pub use vae::{
    batch_latent_stats, LatentBatchStats, LatentDenominator, LatentSpread, Vae, VaeConfig, VaeGrads, VaeLoss, VaeParams,
};

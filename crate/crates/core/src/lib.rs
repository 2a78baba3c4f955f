//! Surprise-minimizing reward shaping for PPO, with procedurally generated
//! grid games for measuring train/test generalization.

pub mod density;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod obs;
pub mod ppo;
pub mod rng;

pub use error::{Error, Result};

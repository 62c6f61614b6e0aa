//! Hard negative sampling for implicit-feedback recommenders.
//!
//! - [`dataset`]: parsing, k-core filtering, id maps and per-user splits.
//! - [`metrics`]: Top-K metrics, AUC, one-way partial AUC and model evaluation.
//! - [`sampler`]: candidate pools and the uniform, popularity, softmax,
//!   DNS(M, N) and Softmax-v(rho, N) negative distributions.
//! - [`trainer`]: matrix factorization trained with the sampled pairwise loss.
//! - [`simlab`]: Monte Carlo correlation and sampling studies, exhaustive
//!   bound checks.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod dataset;
mod error;
pub mod metrics;
pub mod rng;
pub mod sampler;
mod scalar;
pub mod simlab;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model = trainer::MfModel<f64>;
pub type Model32 = trainer::MfModel<f32>;
pub type Ranking = metrics::LabeledRanking<f64>;
pub type Distribution = sampler::PoolDistribution<f64>;
pub type OptimizerState = trainer::AdamState<f64>;
pub type ModelCheckpoint = trainer::Checkpoint<f64>;
pub type Bounds = metrics::BoundPair<f64>;

//! Risk-constrained soft actor-critic. A reward-critic ensemble is trained by
//! adaptive Langevin dynamics and costs are modelled by an implicit-quantile
//! critic. A Lagrange multiplier tracks the empirical CVaR of episode costs.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); training
//! runs in `f64`.

pub mod checkpoint;
pub mod config;
pub mod constraint;
pub mod cost;
pub mod ensemble;
pub mod env;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod scalar;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MlpF64 = nn::Mlp<f64>;
pub type MlpF32 = nn::Mlp<f32>;
pub type PolicyF64 = policy::GaussianPolicy<f64>;
pub type PolicyF32 = policy::GaussianPolicy<f32>;
pub type EnsembleF64 = ensemble::RewardEnsemble<f64>;
pub type EnsembleF32 = ensemble::RewardEnsemble<f32>;
pub type CostCriticF64 = cost::QuantileCostCritic<f64>;
pub type CostCriticF32 = cost::QuantileCostCritic<f32>;

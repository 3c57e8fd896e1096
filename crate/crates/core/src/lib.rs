//! Bayesian active learning with scaled-normal variational networks.
//!
//! The crate trains variational dense networks, deep ensembles, and MC-dropout
//! networks; turns them into per-example uncertainty scores (predictive entropy,
//! variation ratio, or a single-pass moment-propagation estimate); and drives a
//! pool-based active-learning loop around them.

pub mod active;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod numerics;
pub mod runner;
pub mod train;
pub mod uncertainty;

pub use active::{ALConfig, Acquisition, PoolState, RoundRecord};
pub use data::{Dataset, Targets, TaskKind};
pub use error::{Error, Result};
pub use nn::{Family, Network, NetworkSpec};
pub use runner::{run_experiment, ExperimentConfig};
pub use numerics::{RngStream, Tensor};
pub use train::{TrainConfig, TrainHistory, TrainMode};
pub use uncertainty::{Estimator, EstimatorKind, PredictiveSamples};

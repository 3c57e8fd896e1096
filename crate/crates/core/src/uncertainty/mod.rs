//! Per-example uncertainty from sampled passes or propagated moments.

pub mod aue;
pub mod estimator;
pub mod samples;

pub use aue::{aue_linear_moments, aue_predict, aue_propagate, aue_propagate_batch, aue_relu_moments, MomentVector};
pub use estimator::{mc_predict, Estimator, EstimatorKind};
pub use samples::{entropy, entropy_score, mean_predictive, variation_ratio_score, PassKind, PredictiveSamples};

//! Variational, plain, and dropout networks.

pub mod checkpoint;
pub mod layers;
pub mod network;

pub use layers::{
    init_variational_dense, kl_scales, kl_weights, sample_weights, Dense, Dropout, VariationalDense, WeightRealization,
};
pub use network::{
    mean_forward, reset_parameters, stochastic_forward, Family, Gradients, Layer, LayerNoise, LayerSpec, Network,
    NetworkSpec, Noise, Tape,
};

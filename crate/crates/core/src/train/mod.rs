//! Losses, gradients, Adam, the training loop, and temperature scaling.

pub mod adam;
pub mod loss;
pub mod temperature;
pub mod trainer;

pub use adam::{adam_step, OptimizerState, DEFAULT_LEARNING_RATE};
pub use loss::{backward, cross_entropy, data_loss, elbo_loss, objective_and_gradients, squared_error};
pub use temperature::{apply_temperature, fit_temperature};
pub use trainer::{train_model, EarlyStopping, EpochRecord, KlScaleMode, TrainConfig, TrainHistory, TrainMode};

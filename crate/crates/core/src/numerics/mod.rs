//! Dense tensors, special functions, and seeded randomness.

pub mod rng;
pub mod special;
pub mod tensor;

pub use rng::{derive_stream, sample_gaussian, RngStream};
pub use special::{argmax, gauss_cdf, gauss_pdf, log_softmax, sigmoid, softmax, softmax_in_place, softmax_rows, softplus};
pub use tensor::Tensor;

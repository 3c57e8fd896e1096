//! Shared fixtures for the benchmarks.

use bnnal_core::data::gen_synthetic_classification;
use bnnal_core::nn::{Family, NetworkSpec};
use bnnal_core::{Dataset, Network, RngStream};

/// Blobs shaped like flattened 28×28 digits.
pub fn digits_like(n: usize) -> Dataset {
    gen_synthetic_classification(n, 10, 784, 3.0, &mut RngStream::derive(0, 1)).expect("valid shape")
}

pub fn lenet(family: Family) -> Network {
    let spec = NetworkSpec::mlp(family, 784, &[300, 100], 10, 0.5).expect("valid spec");
    Network::new(spec, &mut RngStream::derive(0, 2))
}

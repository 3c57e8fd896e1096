//! Layer parameter blocks: the scaled-normal variational dense layer, a plain
//! dense layer, and inverted dropout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::special::{sigmoid, softplus};
use crate::numerics::{RngStream, Tensor};

/// Constants of the sigmoid/softplus approximation to the log-uniform scale KL.
pub const KL_K1: f64 = 0.63576;
pub const KL_K2: f64 = 1.87320;
pub const KL_K3: f64 = 1.48695;

/// Initial mean and spread of `log σ²` for weights and scales.
pub const INIT_LOG_VAR_MEAN: f64 = -9.0;
pub const INIT_LOG_VAR_STD: f64 = 1e-3;
pub const INIT_SCALE_MEAN: f64 = 1.0;
pub const INIT_SCALE_STD: f64 = 1e-3;

/// Variational posterior of one fully connected layer.
///
/// Each weight is `w_ij = z_j · (μ_ij + σ_ij ε_ij)` with a per-input-column
/// scale `z_j = μ_z_j + σ_z_j ε_z_j`. Variances are stored as `log σ²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalDense {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out × n_in`
    pub mu_w: Tensor,
    /// `n_out × n_in`
    pub log_var_w: Tensor,
    /// `n_in`
    pub mu_z: Tensor,
    /// `n_in`
    pub log_var_z: Tensor,
    /// `n_out`, point-estimated
    pub bias: Tensor,
}

/// One draw of a variational layer's weights, plus the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightRealization {
    pub w: Tensor,
    pub z: Tensor,
    pub eps_w: Tensor,
    pub eps_z: Tensor,
}

impl VariationalDense {
    pub fn init(n_in: usize, n_out: usize, stream: &mut RngStream) -> Self {
        assert!(n_in >= 1 && n_out >= 1, "layer dimensions must be positive");
        let mu_std = 1.0 / (n_in as f64).sqrt();
        let gauss = |stream: &mut RngStream, mean: f64, std: f64, len: usize| {
            (0..len).map(|_| mean + std * stream.normal()).collect::<Vec<_>>()
        };
        let mu_w = gauss(stream, 0.0, mu_std, n_out * n_in);
        let log_var_w = gauss(stream, INIT_LOG_VAR_MEAN, INIT_LOG_VAR_STD, n_out * n_in);
        let mu_z = gauss(stream, INIT_SCALE_MEAN, INIT_SCALE_STD, n_in);
        let log_var_z = gauss(stream, INIT_LOG_VAR_MEAN, INIT_LOG_VAR_STD, n_in);
        Self {
            n_in,
            n_out,
            mu_w: Tensor::matrix(n_out, n_in, mu_w).expect("sized above"),
            log_var_w: Tensor::matrix(n_out, n_in, log_var_w).expect("sized above"),
            mu_z: Tensor::vector(mu_z),
            log_var_z: Tensor::vector(log_var_z),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    /// Standard deviation used for the initial weight means.
    pub fn init_mean_std(n_in: usize) -> f64 {
        1.0 / (n_in as f64).sqrt()
    }

    pub fn draw_noise(&self, stream: &mut RngStream) -> (Vec<f64>, Vec<f64>) {
        let mut eps_z = vec![0.0; self.n_in];
        let mut eps_w = vec![0.0; self.n_in * self.n_out];
        stream.fill_normal(&mut eps_z);
        stream.fill_normal(&mut eps_w);
        (eps_w, eps_z)
    }

    /// Deterministic transform of parameter-free noise into weights.
    pub fn realize_into(&self, eps_w: &[f64], eps_z: &[f64], w: &mut [f64], z: &mut [f64]) {
        let n_in = self.n_in;
        for j in 0..n_in {
            z[j] = self.mu_z.data()[j] + (0.5 * self.log_var_z.data()[j]).exp() * eps_z[j];
        }
        let mu = self.mu_w.data();
        let lv = self.log_var_w.data();
        for i in 0..self.n_out {
            let row = i * n_in;
            for j in 0..n_in {
                let k = row + j;
                w[k] = z[j] * (mu[k] + (0.5 * lv[k]).exp() * eps_w[k]);
            }
        }
    }

    pub fn realize(&self, eps_w: Vec<f64>, eps_z: Vec<f64>) -> WeightRealization {
        let mut w = vec![0.0; self.n_out * self.n_in];
        let mut z = vec![0.0; self.n_in];
        self.realize_into(&eps_w, &eps_z, &mut w, &mut z);
        WeightRealization {
            w: Tensor::matrix(self.n_out, self.n_in, w).expect("sized"),
            z: Tensor::vector(z),
            eps_w: Tensor::matrix(self.n_out, self.n_in, eps_w).expect("sized"),
            eps_z: Tensor::vector(eps_z),
        }
    }

    pub fn sample_weights(&self, stream: &mut RngStream) -> WeightRealization {
        let (eps_w, eps_z) = self.draw_noise(stream);
        self.realize(eps_w, eps_z)
    }

    /// `W̃ = M_W diag(μ_z)`, i.e. entries `μ_z_j · μ_ij`.
    pub fn mean_weights(&self) -> Vec<f64> {
        let n_in = self.n_in;
        let mz = self.mu_z.data();
        self.mu_w
            .data()
            .iter()
            .enumerate()
            .map(|(k, &m)| mz[k % n_in] * m)
            .collect()
    }

    /// `E[w_ij²] = (μ_z_j² + σ_z_j²)(μ_ij² + σ_ij²)`.
    pub fn second_moment_weights(&self) -> Vec<f64> {
        let n_in = self.n_in;
        let z2: Vec<f64> = self
            .mu_z
            .data()
            .iter()
            .zip(self.log_var_z.data())
            .map(|(m, lv)| m * m + lv.exp())
            .collect();
        self.mu_w
            .data()
            .iter()
            .zip(self.log_var_w.data())
            .enumerate()
            .map(|(k, (m, lv))| z2[k % n_in] * (m * m + lv.exp()))
            .collect()
    }

    /// `½ Σ (σ² + μ² − 1 − log σ²)`.
    pub fn kl_weights(&self) -> f64 {
        0.5 * self
            .mu_w
            .data()
            .iter()
            .zip(self.log_var_w.data())
            .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
            .sum::<f64>()
    }

    /// `α_j = −log(σ_z_j² / μ_z_j²)`.
    pub fn alpha(&self) -> Result<Vec<f64>> {
        self.mu_z
            .data()
            .iter()
            .zip(self.log_var_z.data())
            .enumerate()
            .map(|(j, (&m, &lv))| {
                if m == 0.0 {
                    Err(Error::InvalidArgument(format!("scale mean μ_z[{j}] is zero")))
                } else {
                    Ok((m * m).ln() - lv)
                }
            })
            .collect()
    }

    /// `Σ_j k1 (1 − sigmoid(k2 − k3 α_j) − softplus(α_j) / (2 k1))`.
    pub fn kl_scales(&self) -> Result<f64> {
        Ok(self.alpha()?.into_iter().map(kl_scale_term).sum())
    }

    pub fn parameters(&self) -> [&Tensor; 5] {
        [&self.mu_w, &self.log_var_w, &self.mu_z, &self.log_var_z, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor; 5] {
        [
            &mut self.mu_w,
            &mut self.log_var_w,
            &mut self.mu_z,
            &mut self.log_var_z,
            &mut self.bias,
        ]
    }
}

pub(crate) fn kl_scale_term(alpha: f64) -> f64 {
    KL_K1 * (1.0 - sigmoid(KL_K2 - KL_K3 * alpha)) - softplus(alpha) / 2.0
}

/// `d/dα` of [`kl_scale_term`].
pub(crate) fn kl_scale_term_grad(alpha: f64) -> f64 {
    let s = sigmoid(KL_K2 - KL_K3 * alpha);
    KL_K1 * KL_K3 * s * (1.0 - s) - 0.5 * sigmoid(alpha)
}

pub fn init_variational_dense(n_in: usize, n_out: usize, stream: &mut RngStream) -> VariationalDense {
    VariationalDense::init(n_in, n_out, stream)
}

pub fn sample_weights(params: &VariationalDense, stream: &mut RngStream) -> WeightRealization {
    params.sample_weights(stream)
}

pub fn kl_weights(params: &VariationalDense) -> f64 {
    params.kl_weights()
}

pub fn kl_scales(params: &VariationalDense) -> Result<f64> {
    params.kl_scales()
}

/// Ordinary fully connected layer used by ensemble members and dropout networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    /// `n_out × n_in`
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Kaiming-uniform initialization as done by PyTorch's `Linear`:
    /// weights and biases uniform on `±1/√n_in`.
    pub fn init(n_in: usize, n_out: usize, stream: &mut RngStream) -> Self {
        assert!(n_in >= 1 && n_out >= 1, "layer dimensions must be positive");
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| bound * (2.0 * stream.uniform() - 1.0)).collect() };
        let weight = draw(n_out * n_in);
        let bias = draw(n_out);
        Self {
            n_in,
            n_out,
            weight: Tensor::matrix(n_out, n_in, weight).expect("sized"),
            bias: Tensor::vector(bias),
        }
    }

    pub fn parameters(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn parameters_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Inverted dropout: kept activations are divided by the keep probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    /// Multiplicative mask of `len` entries, each `0` or `1/(1−rate)`.
    pub fn draw_mask(&self, len: usize, stream: &mut RngStream) -> Vec<f64> {
        let keep = 1.0 - self.rate;
        let scale = if keep > 0.0 { 1.0 / keep } else { 0.0 };
        (0..len)
            .map(|_| if stream.uniform() < keep { scale } else { 0.0 })
            .collect()
    }
}

//! Layer stacks: construction, mean and stochastic forward passes, and
//! reverse-mode gradients.
//!
//! A ReLU follows every dense layer except the last one; the last dense layer
//! emits logits (or regression outputs). Dropout layers sit wherever the
//! `NetworkSpec` places them and only act when a mask is supplied.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::layers::{kl_scale_term_grad, Dense, Dropout, VariationalDense};
use crate::numerics::tensor::{gemm, Layout};
use crate::numerics::{RngStream, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Variational { n_in: usize, n_out: usize },
    Dense { n_in: usize, n_out: usize },
    Dropout { rate: f64 },
}

impl LayerSpec {
    fn dims(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Variational { n_in, n_out } | LayerSpec::Dense { n_in, n_out } => Some((n_in, n_out)),
            LayerSpec::Dropout { .. } => None,
        }
    }
}

/// Which kind of dense layer an MLP preset is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Variational layers, no dropout.
    Bayesian,
    /// Plain layers, no dropout (ensemble members).
    Plain,
    /// Plain layers with dropout after every hidden activation.
    Dropout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let mut width: Option<usize> = None;
        let mut last_dense = None;
        for (i, l) in layers.iter().enumerate() {
            match *l {
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    if width.is_none() {
                        return Err(Error::InvalidArgument("dropout cannot precede the first dense layer".into()));
                    }
                }
                _ => {
                    let (n_in, n_out) = l.dims().expect("dense layer");
                    if n_in == 0 || n_out == 0 {
                        return Err(Error::InvalidArgument(format!("layer {i} has a zero dimension")));
                    }
                    if let Some(w) = width {
                        if w != n_in {
                            return Err(Error::Shape(format!(
                                "layer {i} expects {n_in} inputs but the previous layer emits {w}"
                            )));
                        }
                    }
                    width = Some(n_out);
                    last_dense = Some(i);
                }
            }
        }
        match last_dense {
            Some(i) if i + 1 == layers.len() => Ok(Self { layers }),
            Some(_) => Err(Error::InvalidArgument("the final layer must be dense".into())),
            None => Err(Error::InvalidArgument("a network needs at least one dense layer".into())),
        }
    }

    /// `input → hidden… → output` with ReLU between dense layers.
    pub fn mlp(family: Family, input: usize, hidden: &[usize], output: usize, dropout_rate: f64) -> Result<Self> {
        let mut layers = Vec::new();
        let mut prev = input;
        let dense = |n_in, n_out| match family {
            Family::Bayesian => LayerSpec::Variational { n_in, n_out },
            Family::Plain | Family::Dropout => LayerSpec::Dense { n_in, n_out },
        };
        for &h in hidden {
            layers.push(dense(prev, h));
            if family == Family::Dropout {
                layers.push(LayerSpec::Dropout { rate: dropout_rate });
            }
            prev = h;
        }
        layers.push(dense(prev, output));
        Self::new(layers)
    }

    /// Two hidden layers of 300 and 100 units.
    pub fn lenet_d2(family: Family, input: usize, output: usize, dropout_rate: f64) -> Result<Self> {
        Self::mlp(family, input, &[300, 100], output, dropout_rate)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.iter().find_map(|l| l.dims()).map(|d| d.0).expect("validated")
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().rev().find_map(|l| l.dims()).map(|d| d.1).expect("validated")
    }

    fn relu_after(&self) -> Vec<bool> {
        let last = self.layers.iter().rposition(|l| l.dims().is_some()).expect("validated");
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| l.dims().is_some() && i != last)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Variational(VariationalDense),
    Dense(Dense),
    Dropout(Dropout),
}

/// Per-call noise: weight noise for variational layers, masks for dropout.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerNoise {
    Weights { eps_w: Vec<f64>, eps_z: Vec<f64> },
    /// `batch × width` multiplicative mask.
    Mask(Vec<f64>),
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub batch: usize,
    pub layers: Vec<LayerNoise>,
}

/// Gradients aligned with [`Network::parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            tensors: net.parameters().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

enum Cache {
    Linear {
        input: Vec<f64>,
        weight: Vec<f64>,
        /// Realized scales, for variational layers.
        z: Option<Vec<f64>>,
        /// Pre-activation sign, when a ReLU follows.
        active: Option<Vec<bool>>,
    },
    Dropout {
        mask: Option<Vec<f64>>,
    },
}

/// Activations recorded by [`Network::forward_tape`].
pub struct Tape {
    batch: usize,
    caches: Vec<Cache>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    relu_after: Vec<bool>,
}

impl Network {
    pub fn new(spec: NetworkSpec, stream: &mut RngStream) -> Self {
        let layers = Self::init_layers(&spec, stream);
        let relu_after = spec.relu_after();
        Self { spec, layers, relu_after }
    }

    fn init_layers(spec: &NetworkSpec, stream: &mut RngStream) -> Vec<Layer> {
        spec.layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Variational { n_in, n_out } => Layer::Variational(VariationalDense::init(n_in, n_out, stream)),
                LayerSpec::Dense { n_in, n_out } => Layer::Dense(Dense::init(n_in, n_out, stream)),
                LayerSpec::Dropout { rate } => Layer::Dropout(Dropout { rate }),
            })
            .collect()
    }

    /// Assemble a network from explicit layers (checkpoint loading, fixtures).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs = layers
            .iter()
            .map(|l| match l {
                Layer::Variational(v) => LayerSpec::Variational { n_in: v.n_in, n_out: v.n_out },
                Layer::Dense(d) => LayerSpec::Dense { n_in: d.n_in, n_out: d.n_out },
                Layer::Dropout(d) => LayerSpec::Dropout { rate: d.rate },
            })
            .collect();
        let spec = NetworkSpec::new(specs)?;
        for l in &layers {
            let ok = match l {
                Layer::Variational(v) => {
                    v.mu_w.shape() == [v.n_out, v.n_in]
                        && v.log_var_w.shape() == [v.n_out, v.n_in]
                        && v.mu_z.len() == v.n_in
                        && v.log_var_z.len() == v.n_in
                        && v.bias.len() == v.n_out
                }
                Layer::Dense(d) => d.weight.shape() == [d.n_out, d.n_in] && d.bias.len() == d.n_out,
                Layer::Dropout(_) => true,
            };
            if !ok {
                return Err(Error::Shape("layer parameter shapes disagree with its dimensions".into()));
            }
        }
        let relu_after = spec.relu_after();
        Ok(Self { spec, layers, relu_after })
    }

    /// Re-draw every parameter exactly as a fresh [`Network::new`] would.
    pub fn reset_parameters(&mut self, stream: &mut RngStream) {
        self.layers = Self::init_layers(&self.spec, stream);
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn is_bayesian(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Variational(_)))
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Dropout(_)))
    }

    pub fn variational_layers(&self) -> impl Iterator<Item = &VariationalDense> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Variational(v) => Some(v),
            _ => None,
        })
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Variational(v) => out.extend(v.parameters()),
                Layer::Dense(d) => out.extend(d.parameters()),
                Layer::Dropout(_) => {}
            }
        }
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Variational(v) => out.extend(v.parameters_mut()),
                Layer::Dense(d) => out.extend(d.parameters_mut()),
                Layer::Dropout(_) => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// SHA-256 over the bit patterns of every parameter, hex encoded.
    pub fn parameter_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in self.parameters() {
            for v in t.data() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Sum over variational layers of both closed-form KL terms.
    pub fn kl_total(&self) -> Result<f64> {
        let mut total = 0.0;
        for v in self.variational_layers() {
            total += v.kl_weights() + v.kl_scales()?;
        }
        Ok(total)
    }

    /// Adds `scale · ∇ kl_total` into `grads`.
    pub fn accumulate_kl_gradients(&self, grads: &mut Gradients, scale: f64) -> Result<()> {
        let mut slot = 0;
        for l in &self.layers {
            match l {
                Layer::Variational(v) => {
                    let g = &mut grads.tensors[slot..slot + 5];
                    for (k, (m, lv)) in v.mu_w.data().iter().zip(v.log_var_w.data()).enumerate() {
                        g[0][k] += scale * m;
                        g[1][k] += scale * 0.5 * (lv.exp() - 1.0);
                    }
                    let alpha = v.alpha()?;
                    for (j, a) in alpha.into_iter().enumerate() {
                        let da = kl_scale_term_grad(a);
                        // α = ln μ_z² − log σ_z²
                        g[2][j] += scale * da * 2.0 / v.mu_z.data()[j];
                        g[3][j] -= scale * da;
                    }
                    slot += 5;
                }
                Layer::Dense(_) => slot += 2,
                Layer::Dropout(_) => {}
            }
        }
        Ok(())
    }

    /// Draw one noise realization for a batch of `batch` rows. Dropout masks
    /// are only drawn when `dropout_active`.
    pub fn draw_noise(&self, batch: usize, dropout_active: bool, stream: &mut RngStream) -> Noise {
        let mut width = self.input_dim();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Variational(v) => {
                    width = v.n_out;
                    let (eps_w, eps_z) = v.draw_noise(stream);
                    LayerNoise::Weights { eps_w, eps_z }
                }
                Layer::Dense(d) => {
                    width = d.n_out;
                    LayerNoise::Off
                }
                Layer::Dropout(d) if dropout_active => LayerNoise::Mask(d.draw_mask(batch * width, stream)),
                Layer::Dropout(_) => LayerNoise::Off,
            })
            .collect();
        Noise { batch, layers }
    }

    /// Deterministic pass: variational layers use `μ_z_j · μ_ij`, dropout is identity.
    pub fn mean_forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_impl(x, None, None)
    }

    /// One weight realization (shared by the whole batch) per variational layer.
    pub fn stochastic_forward(&self, x: &Tensor, stream: &mut RngStream, dropout_active: bool) -> Result<Tensor> {
        let noise = self.draw_noise(x.rows(), dropout_active, stream);
        self.forward_impl(x, Some(&noise), None)
    }

    pub fn forward_with_noise(&self, x: &Tensor, noise: &Noise) -> Result<Tensor> {
        self.forward_impl(x, Some(noise), None)
    }

    /// Forward pass that records what [`Network::backward`] needs. With
    /// `noise == None` variational layers use zero noise (the mean weights).
    pub fn forward_tape(&self, x: &Tensor, noise: Option<&Noise>) -> Result<(Tensor, Tape)> {
        let mut tape = Tape {
            batch: x.rows(),
            caches: Vec::with_capacity(self.layers.len()),
        };
        let out = self.forward_impl(x, noise, Some(&mut tape))?;
        Ok((out, tape))
    }

    fn forward_impl(&self, x: &Tensor, noise: Option<&Noise>, mut tape: Option<&mut Tape>) -> Result<Tensor> {
        if x.shape().len() != 2 || x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input of shape {:?} does not match network input width {}",
                x.shape(),
                self.input_dim()
            )));
        }
        let n = x.rows();
        if let Some(noise) = noise {
            if noise.layers.len() != self.layers.len() {
                return Err(Error::Shape("noise does not match the network's layers".into()));
            }
        }
        let mut h = x.data().to_vec();
        let mut width = self.input_dim();
        for (li, layer) in self.layers.iter().enumerate() {
            let layer_noise = noise.map(|nz| &nz.layers[li]);
            match layer {
                Layer::Variational(v) => {
                    let (weight, z) = match layer_noise {
                        Some(LayerNoise::Weights { eps_w, eps_z }) => {
                            let mut w = vec![0.0; v.n_out * v.n_in];
                            let mut z = vec![0.0; v.n_in];
                            v.realize_into(eps_w, eps_z, &mut w, &mut z);
                            (w, Some(z))
                        }
                        None | Some(LayerNoise::Off) => (v.mean_weights(), tape.is_some().then(|| v.mu_z.data().to_vec())),
                        Some(LayerNoise::Mask(_)) => return Err(Error::Shape("mask noise on a variational layer".into())),
                    };
                    h = self.linear(li, n, h, weight, z, v.bias.data(), tape.as_deref_mut());
                    width = v.n_out;
                }
                Layer::Dense(d) => {
                    let weight = d.weight.data().to_vec();
                    h = self.linear(li, n, h, weight, None, d.bias.data(), tape.as_deref_mut());
                    width = d.n_out;
                }
                Layer::Dropout(_) => {
                    let mask = match layer_noise {
                        Some(LayerNoise::Mask(m)) => {
                            if m.len() != n * width {
                                return Err(Error::Shape(format!(
                                    "dropout mask has {} entries, batch needs {}",
                                    m.len(),
                                    n * width
                                )));
                            }
                            for (a, s) in h.iter_mut().zip(m) {
                                *a *= s;
                            }
                            Some(m.clone())
                        }
                        _ => None,
                    };
                    if let Some(t) = tape.as_deref_mut() {
                        t.caches.push(Cache::Dropout { mask });
                    }
                }
            }
        }
        Tensor::matrix(n, width, h)
    }

    #[allow(clippy::too_many_arguments)]
    fn linear(
        &self,
        li: usize,
        n: usize,
        input: Vec<f64>,
        weight: Vec<f64>,
        z: Option<Vec<f64>>,
        bias: &[f64],
        tape: Option<&mut Tape>,
    ) -> Vec<f64> {
        let n_out = bias.len();
        let n_in = weight.len() / n_out;
        let mut out = vec![0.0; n * n_out];
        for row in out.chunks_mut(n_out) {
            row.copy_from_slice(bias);
        }
        gemm(n, n_in, n_out, &input, Layout::Normal, &weight, Layout::Transposed, &mut out, true);
        let active = if self.relu_after[li] {
            let mask: Vec<bool> = out.iter().map(|&v| v > 0.0).collect();
            for (v, &a) in out.iter_mut().zip(&mask) {
                if !a {
                    *v = 0.0;
                }
            }
            Some(mask)
        } else {
            None
        };
        if let Some(t) = tape {
            t.caches.push(Cache::Linear {
                input,
                weight,
                z,
                active,
            });
        }
        out
    }

    /// Reverse-mode gradients of a scalar loss whose gradient with respect to
    /// the network output is `grad_out` (`batch × output_dim`).
    pub fn backward(&self, tape: &Tape, noise: Option<&Noise>, grad_out: &[f64]) -> Result<Gradients> {
        let n = tape.batch;
        if grad_out.len() != n * self.output_dim() {
            return Err(Error::Shape("output gradient does not match the forward batch".into()));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut slots = Vec::with_capacity(self.layers.len());
        let mut slot = 0;
        for l in &self.layers {
            slots.push(slot);
            slot += match l {
                Layer::Variational(_) => 5,
                Layer::Dense(_) => 2,
                Layer::Dropout(_) => 0,
            };
        }
        let first_linear = self.layers.iter().position(|l| !matches!(l, Layer::Dropout(_))).expect("validated");
        let mut g = grad_out.to_vec();
        for li in (0..self.layers.len()).rev() {
            match (&self.layers[li], &tape.caches[li]) {
                (Layer::Dropout(_), Cache::Dropout { mask }) => {
                    if let Some(m) = mask {
                        for (a, s) in g.iter_mut().zip(m) {
                            *a *= s;
                        }
                    }
                }
                (layer, Cache::Linear { input, weight, z, active }) => {
                    if let Some(act) = active {
                        for (a, &on) in g.iter_mut().zip(act) {
                            if !on {
                                *a = 0.0;
                            }
                        }
                    }
                    let n_out = g.len() / n;
                    let n_in = input.len() / n;
                    let mut d_w = vec![0.0; n_out * n_in];
                    gemm(n_out, n, n_in, &g, Layout::Transposed, input, Layout::Normal, &mut d_w, false);
                    let mut d_b = vec![0.0; n_out];
                    for row in g.chunks(n_out) {
                        for (b, v) in d_b.iter_mut().zip(row) {
                            *b += v;
                        }
                    }
                    let next = if li > first_linear {
                        let mut d_x = vec![0.0; n * n_in];
                        gemm(n, n_out, n_in, &g, Layout::Normal, weight, Layout::Normal, &mut d_x, false);
                        Some(d_x)
                    } else {
                        None
                    };
                    let s = slots[li];
                    match layer {
                        Layer::Dense(_) => {
                            grads.tensors[s] = d_w;
                            grads.tensors[s + 1] = d_b;
                        }
                        Layer::Variational(v) => {
                            let z = z.as_ref().expect("variational cache carries z");
                            let (eps_w, eps_z) = match noise.map(|nz| &nz.layers[li]) {
                                Some(LayerNoise::Weights { eps_w, eps_z }) => (Some(eps_w), Some(eps_z)),
                                _ => (None, None),
                            };
                            variational_param_grads(v, &d_w, z, eps_w, eps_z, &mut grads.tensors[s..s + 4]);
                            grads.tensors[s + 4] = d_b;
                        }
                        Layer::Dropout(_) => unreachable!(),
                    }
                    match next {
                        Some(d_x) => g = d_x,
                        None => break,
                    }
                }
                _ => unreachable!("cache kinds follow layer kinds"),
            }
        }
        Ok(grads)
    }
}

/// Chain rule through `w_ij = z_j (μ_ij + e^{lv_ij/2} ε_ij)`,
/// `z_j = μ_z_j + e^{lvz_j/2} ε_z_j`.
fn variational_param_grads(
    v: &VariationalDense,
    d_w: &[f64],
    z: &[f64],
    eps_w: Option<&Vec<f64>>,
    eps_z: Option<&Vec<f64>>,
    out: &mut [Vec<f64>],
) {
    let n_in = v.n_in;
    let mu = v.mu_w.data();
    let lv = v.log_var_w.data();
    let mut d_z = vec![0.0; n_in];
    {
        let (d_mu, rest) = out.split_at_mut(1);
        let d_mu = &mut d_mu[0];
        let d_lv = &mut rest[0];
        for i in 0..v.n_out {
            for j in 0..n_in {
                let k = i * n_in + j;
                let e = eps_w.map_or(0.0, |e| e[k]);
                let sigma = (0.5 * lv[k]).exp();
                d_mu[k] = d_w[k] * z[j];
                d_lv[k] = d_w[k] * z[j] * e * sigma * 0.5;
                d_z[j] += d_w[k] * (mu[k] + sigma * e);
            }
        }
    }
    for j in 0..n_in {
        let e = eps_z.map_or(0.0, |e| e[j]);
        let sigma = (0.5 * v.log_var_z.data()[j]).exp();
        out[2][j] = d_z[j];
        out[3][j] = d_z[j] * e * sigma * 0.5;
    }
}

pub fn mean_forward(net: &Network, x: &Tensor) -> Result<Tensor> {
    net.mean_forward(x)
}

pub fn stochastic_forward(net: &Network, x: &Tensor, stream: &mut RngStream, dropout_active: bool) -> Result<Tensor> {
    net.stochastic_forward(x, stream, dropout_active)
}

pub fn reset_parameters(net: &mut Network, stream: &mut RngStream) {
    net.reset_parameters(stream)
}

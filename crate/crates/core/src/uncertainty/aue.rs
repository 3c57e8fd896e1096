//! Single-pass moment propagation through variational ReLU networks.
//!
//! Each unit is treated as an independent Gaussian. Linear layers map input
//! means and variances to the mean and variance of `y = Wx + b` under the scaled
//! normal posterior; ReLU layers use rectified-Gaussian moments. Only the
//! final pre-activation is sampled.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{Layer, Network, VariationalDense};
use crate::numerics::tensor::{gemm, Layout};
use crate::numerics::{gauss_cdf, gauss_pdf, softmax_in_place, RngStream, Tensor};
use crate::uncertainty::samples::{PassKind, PredictiveSamples};

/// Per-unit mean and variance.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentVector {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl MomentVector {
    /// A point mass at `x`.
    pub fn deterministic(x: &[f64]) -> Self {
        Self {
            mean: x.to_vec(),
            variance: vec![0.0; x.len()],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn second_moment(&self) -> Vec<f64> {
        self.mean.iter().zip(&self.variance).map(|(m, v)| m * m + v).collect()
    }
}

/// `E[w]`, `Var[w]`, and `E[w]²` for one layer, row-major `n_out × n_in`.
struct WeightMoments {
    first: Vec<f64>,
    var: Vec<f64>,
    first_sq: Vec<f64>,
}

impl WeightMoments {
    fn of(layer: &VariationalDense) -> Self {
        let n_in = layer.n_in;
        let first = layer.mean_weights();
        let first_sq = first.iter().map(|w| w * w).collect();
        // Var[z·w'] = σz²(μ² + σ²) + μz²σ², written without cancellation
        let var = layer
            .mu_w
            .data()
            .iter()
            .zip(layer.log_var_w.data())
            .enumerate()
            .map(|(idx, (&mu, &lv))| {
                let j = idx % n_in;
                let mz = layer.mu_z.data()[j];
                let vz = layer.log_var_z.data()[j].exp();
                let v = lv.exp();
                vz * (mu * mu + v) + mz * mz * v
            })
            .collect();
        Self { first, var, first_sq }
    }
}

/// Moments of `y = Wx + b` for a batch of `n` inputs with the given means and
/// variances, using `V[y_i] = Σ_j Var[w_ij]·E[x_j²] + E[w_ij]²·Var[x_j]`.
fn linear_batch(layer: &VariationalDense, wm: &WeightMoments, n: usize, mx: &[f64], vx: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n_in, n_out) = (layer.n_in, layer.n_out);
    let mut mean = vec![0.0; n * n_out];
    for row in mean.chunks_mut(n_out) {
        row.copy_from_slice(layer.bias.data());
    }
    gemm(n, n_in, n_out, mx, Layout::Normal, &wm.first, Layout::Transposed, &mut mean, true);
    let ex2: Vec<f64> = mx.iter().zip(vx).map(|(m, v)| m * m + v).collect();
    let mut var = vec![0.0; n * n_out];
    gemm(n, n_in, n_out, &ex2, Layout::Normal, &wm.var, Layout::Transposed, &mut var, false);
    gemm(n, n_in, n_out, vx, Layout::Normal, &wm.first_sq, Layout::Transposed, &mut var, true);
    var.iter_mut().for_each(|v| *v = v.max(0.0));
    (mean, var)
}

/// Mean and variance of `y = Wx + b` for independent `w` (scaled normal
/// posterior) and `x` with the given moments.
pub fn aue_linear_moments(layer: &VariationalDense, input: &MomentVector) -> Result<MomentVector> {
    if input.width() != layer.n_in || input.variance.len() != layer.n_in {
        return Err(Error::Shape(format!(
            "moment vector of width {} for a layer with {} inputs",
            input.width(),
            layer.n_in
        )));
    }
    let (mean, variance) = linear_batch(layer, &WeightMoments::of(layer), 1, &input.mean, &input.variance);
    Ok(MomentVector { mean, variance })
}

/// `(E[max(0, Y)], E[max(0, Y)²])` for `Y ~ N(mu, var)`.
pub fn relu_moments(mu: f64, var: f64) -> (f64, f64) {
    let s = var.sqrt();
    if s == 0.0 {
        let m = mu.max(0.0);
        return (m, m * m);
    }
    let d = mu / s;
    let (cdf, pdf) = (gauss_cdf(d), gauss_pdf(d));
    let m1 = mu * cdf + s * pdf;
    let m2 = (mu * mu + var) * cdf + mu * s * pdf;
    (m1.max(0.0), m2.max(0.0))
}

/// Moments after a ReLU, returned as mean and (clamped) variance.
pub fn aue_relu_moments(pre_act: &MomentVector) -> Result<MomentVector> {
    if let Some(v) = pre_act.variance.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative pre-activation variance {v}")));
    }
    let (mean, variance) = pre_act
        .mean
        .iter()
        .zip(&pre_act.variance)
        .map(|(&m, &v)| {
            let (m1, m2) = relu_moments(m, v);
            (m1, (m2 - m1 * m1).max(0.0))
        })
        .unzip();
    Ok(MomentVector { mean, variance })
}

fn variational_stack(net: &Network) -> Result<Vec<&VariationalDense>> {
    net.layers()
        .iter()
        .map(|l| match l {
            Layer::Variational(v) => Ok(v),
            Layer::Dense(_) => Err(Error::UnsupportedLayer(
                "moment propagation needs variational layers, found a plain dense layer".into(),
            )),
            Layer::Dropout(_) => Err(Error::UnsupportedLayer("moment propagation does not support dropout layers".into())),
        })
        .collect()
}

/// Mean and variance (`N × C` each) of the final pre-activation for every row of `x`.
pub fn aue_propagate_batch(net: &Network, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let layers = variational_stack(net)?;
    if x.shape().len() != 2 || x.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "input of shape {:?} does not match network input width {}",
            x.shape(),
            net.input_dim()
        )));
    }
    let n = x.rows();
    let mut mx = x.data().to_vec();
    let mut vx = vec![0.0; mx.len()];
    let last = layers.len() - 1;
    for (li, layer) in layers.iter().enumerate() {
        let (mean, var) = linear_batch(layer, &WeightMoments::of(layer), n, &mx, &vx);
        if li == last {
            let c = layer.n_out;
            return Ok((Tensor::matrix(n, c, mean)?, Tensor::matrix(n, c, var)?));
        }
        (mx, vx) = mean
            .iter()
            .zip(&var)
            .map(|(&m, &v)| {
                let (m1, m2) = relu_moments(m, v);
                (m1, (m2 - m1 * m1).max(0.0))
            })
            .unzip();
    }
    unreachable!("a network has at least one layer")
}

/// Per-example moments of the final pre-activation.
pub fn aue_propagate(net: &Network, x: &Tensor) -> Result<Vec<MomentVector>> {
    let (mean, var) = aue_propagate_batch(net, x)?;
    Ok(mean
        .rows_iter()
        .zip(var.rows_iter())
        .map(|(m, v)| MomentVector {
            mean: m.to_vec(),
            variance: v.to_vec(),
        })
        .collect())
}

/// `S` Gaussian draws of the final pre-activation per example, each
/// softmaxed. Draw `s` uses `stream.child(s)`.
pub fn aue_predict(net: &Network, x: &Tensor, samples: usize, stream: &RngStream) -> Result<PredictiveSamples> {
    if samples == 0 {
        return Err(Error::InvalidArgument("AUE sample count S must be at least 1".into()));
    }
    let (mean, var) = aue_propagate_batch(net, x)?;
    let (n, c) = (mean.rows(), mean.cols());
    let std: Vec<f64> = var.data().iter().map(|v| v.sqrt()).collect();
    let slices = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream.child(s as u64);
            let mut y = vec![0.0; n * c];
            rng.fill_normal(&mut y);
            for ((v, m), sd) in y.iter_mut().zip(mean.data()).zip(&std) {
                *v = m + sd * *v;
            }
            for row in y.chunks_mut(c) {
                softmax_in_place(row);
            }
            Tensor::matrix(n, c, y)
        })
        .collect::<Result<Vec<_>>>()?;
    PredictiveSamples::from_passes(slices, PassKind::MomentSample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Family, NetworkSpec};
    use crate::numerics::softmax_rows;
    use crate::uncertainty::samples::{entropy, entropy_score};

    fn layer(n_in: usize, n_out: usize, seed: u64) -> VariationalDense {
        VariationalDense::init(n_in, n_out, &mut RngStream::derive(seed, 0))
    }

    fn deterministic_layer(mu_w: Vec<f64>, n_in: usize, n_out: usize) -> VariationalDense {
        let mut l = layer(n_in, n_out, 0);
        l.mu_w = Tensor::matrix(n_out, n_in, mu_w).unwrap();
        l.log_var_w = Tensor::full(&[n_out, n_in], f64::NEG_INFINITY);
        l.mu_z = Tensor::full(&[n_in], 1.0);
        l.log_var_z = Tensor::full(&[n_in], f64::NEG_INFINITY);
        l
    }

    #[test]
    fn deterministic_layer_is_affine() {
        let mut l = deterministic_layer(vec![1.0, 2.0, -1.0, 0.5], 2, 2);
        l.bias = Tensor::vector(vec![0.1, -0.2]);
        let out = aue_linear_moments(&l, &MomentVector::deterministic(&[3.0, 4.0])).unwrap();
        assert_eq!(out.mean, vec![11.1, -1.2]);
        assert_eq!(out.variance, vec![0.0, 0.0]);
    }

    #[test]
    fn weight_variance_passes_through() {
        let mut l = deterministic_layer(vec![0.0], 1, 1);
        l.log_var_w = Tensor::full(&[1, 1], 0.0);
        let out = aue_linear_moments(&l, &MomentVector::deterministic(&[1.0])).unwrap();
        assert_eq!(out.mean, vec![0.0]);
        assert!((out.variance[0] - 1.0).abs() < 1e-15);
        assert!(aue_linear_moments(&l, &MomentVector::deterministic(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn rectified_gaussian_cases() {
        let (m1, m2) = relu_moments(0.0, 1.0);
        assert!((m1 - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((m2 - 0.5).abs() < 1e-15);
        assert_eq!(relu_moments(-3.0, 0.0), (0.0, 0.0));
        let (m1, m2) = relu_moments(5.0, 1e-4);
        assert!((m1 - 5.0).abs() < 1e-4);
        assert!((m2 - 25.0001).abs() < 1e-4);
        let bad = MomentVector {
            mean: vec![0.0],
            variance: vec![-1.0],
        };
        assert!(aue_relu_moments(&bad).is_err());
    }

    #[test]
    fn single_layer_matches_linear_moments() {
        let l = layer(5, 3, 4);
        let net = Network::from_layers(vec![Layer::Variational(l.clone())]).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0, 0.7];
        let a = aue_propagate(&net, &Tensor::matrix(1, 5, x.to_vec()).unwrap()).unwrap();
        let b = aue_linear_moments(&l, &MomentVector::deterministic(&x)).unwrap();
        assert_eq!(a[0], b);
    }

    #[test]
    fn zero_variance_network_reproduces_mean_forward() {
        let spec = NetworkSpec::mlp(Family::Bayesian, 4, &[7, 5], 3, 0.0).unwrap();
        let mut net = Network::new(spec, &mut RngStream::derive(9, 0));
        for l in net.layers_mut() {
            if let Layer::Variational(v) = l {
                v.log_var_w.data_mut().iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
                v.log_var_z.data_mut().iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
            }
        }
        let mut d = vec![0.0; 12 * 4];
        RngStream::derive(9, 1).fill_normal(&mut d);
        let x = Tensor::matrix(12, 4, d).unwrap();
        let (m, v) = aue_propagate_batch(&net, &x).unwrap();
        let f = net.mean_forward(&x).unwrap();
        for (a, b) in m.data().iter().zip(f.data()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(v.data().iter().all(|&v| v == 0.0));
        let s = aue_predict(&net, &x, 4, &RngStream::derive(1, 1)).unwrap();
        let p = softmax_rows(&f);
        let h = entropy_score(&s);
        for i in 0..12 {
            assert!((h[i] - entropy(p.row(i))).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_variational_layers() {
        let spec = NetworkSpec::mlp(Family::Dropout, 3, &[4], 2, 0.5).unwrap();
        let net = Network::new(spec, &mut RngStream::derive(1, 0));
        let err = aue_propagate(&net, &Tensor::zeros(&[1, 3])).unwrap_err();
        assert!(matches!(err, Error::UnsupportedLayer(_)));
    }

    #[test]
    fn predict_is_reproducible() {
        let spec = NetworkSpec::mlp(Family::Bayesian, 3, &[4], 2, 0.0).unwrap();
        let net = Network::new(spec, &mut RngStream::derive(2, 0));
        let x = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, -1.0, 0.0, 1.0]).unwrap();
        let a = aue_predict(&net, &x, 5, &RngStream::derive(3, 3)).unwrap();
        assert_eq!(a, aue_predict(&net, &x, 5, &RngStream::derive(3, 3)).unwrap());
    }
}

//! Estimators and Monte Carlo prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::numerics::{softmax_rows, RngStream, Tensor};
use crate::uncertainty::samples::{PassKind, PredictiveSamples};

/// Rows per forward call when sweeping a large pool.
pub const FORWARD_CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Bnn,
    Ensemble,
    Mcd,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Bnn => "bnn",
            EstimatorKind::Ensemble => "ensemble",
            EstimatorKind::Mcd => "mcd",
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bnn" => Ok(EstimatorKind::Bnn),
            "ensemble" | "en" => Ok(EstimatorKind::Ensemble),
            "mcd" => Ok(EstimatorKind::Mcd),
            _ => Err(Error::Config(format!("unknown estimator '{s}' (expected bnn, ensemble, or mcd)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Estimator {
    Bnn(Network),
    Ensemble(Vec<Network>),
    Mcd(Network),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Bnn(_) => EstimatorKind::Bnn,
            Estimator::Ensemble(_) => EstimatorKind::Ensemble,
            Estimator::Mcd(_) => EstimatorKind::Mcd,
        }
    }

    pub fn networks(&self) -> &[Network] {
        match self {
            Estimator::Bnn(n) | Estimator::Mcd(n) => std::slice::from_ref(n),
            Estimator::Ensemble(m) => m,
        }
    }

    pub fn networks_mut(&mut self) -> &mut [Network] {
        match self {
            Estimator::Bnn(n) | Estimator::Mcd(n) => std::slice::from_mut(n),
            Estimator::Ensemble(m) => m,
        }
    }

    /// Test-time class probabilities: the mean-weight pass for BNNs, dropout
    /// off for MCD, and the member average for ensembles.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Tensor> {
        let nets = self.networks();
        let mut acc: Option<Tensor> = None;
        for net in nets {
            let p = softmax_rows(&chunked(x, |xb| net.mean_forward(xb))?);
            match acc.as_mut() {
                None => acc = Some(p),
                Some(a) => a.data_mut().iter_mut().zip(p.data()).for_each(|(s, v)| *s += v),
            }
        }
        let mut out = acc.ok_or_else(|| Error::InvalidArgument("estimator has no networks".into()))?;
        if nets.len() > 1 {
            let m = nets.len() as f64;
            out.data_mut().iter_mut().for_each(|v| *v /= m);
        }
        Ok(out)
    }

    /// Test-time logits; ensembles return the log of the averaged probabilities.
    pub fn predict_logits(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Estimator::Bnn(n) | Estimator::Mcd(n) => chunked(x, |xb| n.mean_forward(xb)),
            Estimator::Ensemble(_) => Ok(self.predict_proba(x)?.map(|p| p.max(f64::MIN_POSITIVE).ln())),
        }
    }
}

/// Apply `f` to row blocks of `x` and concatenate the results.
pub(crate) fn chunked(x: &Tensor, mut f: impl FnMut(&Tensor) -> Result<Tensor>) -> Result<Tensor> {
    if x.rows() <= FORWARD_CHUNK {
        return f(x);
    }
    let mut data = Vec::new();
    let mut cols = 0;
    let idx: Vec<usize> = (0..x.rows()).collect();
    for block in idx.chunks(FORWARD_CHUNK) {
        let out = f(&x.select_rows(block))?;
        cols = out.cols();
        data.extend_from_slice(out.data());
    }
    Tensor::matrix(x.rows(), cols, data)
}

/// `T` stochastic passes over `x`, each ending in a softmax.
///
/// Pass `t` draws from `stream.child(t)`, so the stack does not depend on how
/// passes are scheduled across threads. BNN passes share one weight draw across
/// all rows; MCD passes draw a fresh mask per row with dropout active; ensemble
/// pass `t` is member `t`'s deterministic forward and requires `T == M`.
pub fn mc_predict(est: &Estimator, x: &Tensor, passes: usize, stream: &RngStream) -> Result<PredictiveSamples> {
    if passes == 0 {
        return Err(Error::InvalidArgument("pass count T must be at least 1".into()));
    }
    let (kind, slices) = match est {
        Estimator::Ensemble(members) => {
            if members.len() != passes {
                return Err(Error::Config(format!(
                    "ensemble of {} members needs T == M, got T = {passes}",
                    members.len()
                )));
            }
            let slices = members
                .par_iter()
                .map(|m| Ok(softmax_rows(&chunked(x, |xb| m.mean_forward(xb))?)))
                .collect::<Result<Vec<_>>>()?;
            (PassKind::EnsembleMember, slices)
        }
        Estimator::Bnn(net) => {
            let slices = (0..passes)
                .into_par_iter()
                .map(|t| {
                    let mut s = stream.child(t as u64);
                    let noise = net.draw_noise(0, false, &mut s);
                    Ok(softmax_rows(&chunked(x, |xb| net.forward_with_noise(xb, &noise))?))
                })
                .collect::<Result<Vec<_>>>()?;
            (PassKind::PosteriorSample, slices)
        }
        Estimator::Mcd(net) => {
            let slices = (0..passes)
                .into_par_iter()
                .map(|t| {
                    let mut s = stream.child(t as u64);
                    Ok(softmax_rows(&chunked(x, |xb| net.stochastic_forward(xb, &mut s, true))?))
                })
                .collect::<Result<Vec<_>>>()?;
            (PassKind::DropoutMask, slices)
        }
    };
    PredictiveSamples::from_passes(slices, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Family, Layer, NetworkSpec};

    fn input() -> Tensor {
        let mut s = RngStream::derive(3, 3);
        let mut d = vec![0.0; 20 * 4];
        s.fill_normal(&mut d);
        Tensor::matrix(20, 4, d).unwrap()
    }

    fn bnn(seed: u64) -> Network {
        Network::new(NetworkSpec::mlp(Family::Bayesian, 4, &[6], 3, 0.0).unwrap(), &mut RngStream::derive(seed, 0))
    }

    #[test]
    fn collapsed_posterior_gives_identical_slices() {
        let mut net = bnn(1);
        for l in net.layers_mut() {
            if let Layer::Variational(v) = l {
                v.log_var_w.data_mut().iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
                v.log_var_z.data_mut().iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
            }
        }
        let s = mc_predict(&Estimator::Bnn(net), &input(), 5, &RngStream::derive(1, 1)).unwrap();
        for t in 1..5 {
            for n in 0..20 {
                assert_eq!(s.get(t, n), s.get(0, n));
            }
        }
    }

    #[test]
    fn identical_members_give_identical_slices() {
        let spec = NetworkSpec::mlp(Family::Plain, 4, &[6], 3, 0.0).unwrap();
        let m = Network::new(spec, &mut RngStream::derive(2, 0));
        let est = Estimator::Ensemble(vec![m.clone(), m.clone(), m]);
        let s = mc_predict(&est, &input(), 3, &RngStream::derive(1, 1)).unwrap();
        assert_eq!(s.get(2, 7), s.get(0, 7));
        assert!(mc_predict(&est, &input(), 4, &RngStream::derive(1, 1)).is_err());
    }

    #[test]
    fn fixed_stream_is_reproducible() {
        let est = Estimator::Bnn(bnn(4));
        let a = mc_predict(&est, &input(), 6, &RngStream::derive(7, 7)).unwrap();
        let b = mc_predict(&est, &input(), 6, &RngStream::derive(7, 7)).unwrap();
        assert_eq!(a, b);
        let spec = NetworkSpec::mlp(Family::Dropout, 4, &[6], 3, 0.5).unwrap();
        let mcd = Estimator::Mcd(Network::new(spec, &mut RngStream::derive(5, 0)));
        let a = mc_predict(&mcd, &input(), 6, &RngStream::derive(7, 7)).unwrap();
        assert_eq!(a, mc_predict(&mcd, &input(), 6, &RngStream::derive(7, 7)).unwrap());
        assert_ne!(a.get(0, 0), a.get(1, 0));
    }

    #[test]
    fn chunking_does_not_change_bnn_passes() {
        let net = bnn(8);
        let mut s = RngStream::derive(0, 0);
        let mut d = vec![0.0; (FORWARD_CHUNK + 17) * 4];
        s.fill_normal(&mut d);
        let x = Tensor::matrix(FORWARD_CHUNK + 17, 4, d).unwrap();
        let stack = mc_predict(&Estimator::Bnn(net.clone()), &x, 2, &RngStream::derive(1, 2)).unwrap();
        let noise = net.draw_noise(0, false, &mut RngStream::derive(1, 2).child(1));
        let whole = softmax_rows(&net.forward_with_noise(&x, &noise).unwrap());
        for n in [0, FORWARD_CHUNK - 1, FORWARD_CHUNK, FORWARD_CHUNK + 16] {
            for (a, b) in stack.get(1, n).iter().zip(whole.row(n)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("MCD".parse::<EstimatorKind>().unwrap(), EstimatorKind::Mcd);
        assert!("gp".parse::<EstimatorKind>().is_err());
    }
}

//! Predictive sample stacks and the scores computed from them.

use crate::error::{Error, Result};
use crate::numerics::{argmax, Tensor};

/// Where the passes of a stack came from. Scoring ignores it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassKind {
    PosteriorSample,
    DropoutMask,
    EnsembleMember,
    MomentSample,
}

/// `T × N × C` class probabilities, stored pass-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveSamples {
    probs: Tensor,
    pub kind: PassKind,
}

impl PredictiveSamples {
    /// Stack `T` per-pass `N × C` probability matrices.
    pub fn from_passes(passes: Vec<Tensor>, kind: PassKind) -> Result<Self> {
        let first = passes
            .first()
            .ok_or_else(|| Error::InvalidArgument("a predictive stack needs at least one pass".into()))?;
        let (n, c) = (first.rows(), first.cols());
        let t = passes.len();
        let mut data = Vec::with_capacity(t * n * c);
        for p in passes {
            if p.shape() != [n, c] {
                return Err(Error::Shape(format!("pass of shape {:?}, expected [{n}, {c}]", p.shape())));
            }
            data.extend_from_slice(p.data());
        }
        Self::new(Tensor::new(vec![t, n, c], data)?, kind)
    }

    pub fn new(probs: Tensor, kind: PassKind) -> Result<Self> {
        let shape = probs.shape();
        if shape.len() != 3 || shape[0] == 0 || shape[2] == 0 {
            return Err(Error::Shape(format!("expected a non-empty T × N × C stack, got {shape:?}")));
        }
        let c = shape[2];
        for (i, row) in probs.data().chunks_exact(c).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} of the stack is not a probability vector (sum {sum})"
                )));
            }
        }
        Ok(Self { probs, kind })
    }

    pub fn passes(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn examples(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.probs.shape()[2]
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    /// Probabilities of example `n` under pass `t`.
    pub fn get(&self, t: usize, n: usize) -> &[f64] {
        let (nn, c) = (self.examples(), self.classes());
        let start = (t * nn + n) * c;
        &self.probs.data()[start..start + c]
    }
}

/// Average over passes.
pub fn mean_predictive(s: &PredictiveSamples) -> Tensor {
    let (t, n, c) = (s.passes(), s.examples(), s.classes());
    let mut out = vec![0.0; n * c];
    for pass in s.probs.data().chunks_exact(n * c) {
        for (o, p) in out.iter_mut().zip(pass) {
            *o += p;
        }
    }
    out.iter_mut().for_each(|v| *v /= t as f64);
    Tensor::matrix(n, c, out).expect("shape follows the stack")
}

/// Natural-log entropy of a probability vector, with `0 · log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Entropy of the mean predictive distribution, per example.
pub fn entropy_score(s: &PredictiveSamples) -> Vec<f64> {
    mean_predictive(s).rows_iter().map(entropy).collect()
}

/// `1 − f_m / T`, where `f_m` counts the passes voting for the modal class.
pub fn variation_ratio_score(s: &PredictiveSamples) -> Vec<f64> {
    let (t, n, c) = (s.passes(), s.examples(), s.classes());
    let mut votes = vec![0usize; c];
    (0..n)
        .map(|i| {
            votes.iter_mut().for_each(|v| *v = 0);
            for pass in 0..t {
                votes[argmax(s.get(pass, i))] += 1;
            }
            let modal = *votes.iter().max().expect("C ≥ 1");
            1.0 - modal as f64 / t as f64
        })
        .collect()
}

//! Gaussian-blob classification and noisy linear-plus-sine regression.

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// `n` points in `classes` unit-variance blobs (counts differ by at most one).
/// Class means are random directions rescaled so the closest pair is exactly
/// `separation` apart.
pub fn gen_synthetic_classification(
    n: usize,
    classes: usize,
    d: usize,
    separation: f64,
    stream: &mut RngStream,
) -> Result<Dataset> {
    if classes == 0 || d == 0 || n < classes {
        return Err(Error::InvalidArgument(format!(
            "need n ≥ classes ≥ 1 and d ≥ 1 (n={n}, classes={classes}, d={d})"
        )));
    }
    if !(separation > 0.0) {
        return Err(Error::InvalidArgument(format!("separation must be positive, got {separation}")));
    }
    let mut means = vec![0.0; classes * d];
    stream.fill_normal(&mut means);
    let mut min_dist = f64::INFINITY;
    for a in 0..classes {
        for b in a + 1..classes {
            let dist = (0..d)
                .map(|j| (means[a * d + j] - means[b * d + j]).powi(2))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(dist);
        }
    }
    if min_dist.is_finite() && min_dist > 0.0 {
        let s = separation / min_dist;
        means.iter_mut().for_each(|m| *m *= s);
    }
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut x = vec![0.0; n * d];
    stream.fill_normal(&mut x);
    for (i, &c) in labels.iter().enumerate() {
        for j in 0..d {
            x[i * d + j] += means[c * d + j];
        }
    }
    Dataset::new(
        format!("blobs-{classes}x{d}"),
        Tensor::matrix(n, d, x)?,
        Targets::Classes { labels, classes },
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticRegression {
    pub dataset: Dataset,
    /// Ground-truth linear coefficients.
    pub weights: Vec<f64>,
}

impl SyntheticRegression {
    /// Noise-free response at each row.
    pub fn truth(&self) -> Vec<f64> {
        self.dataset
            .features
            .rows_iter()
            .map(|r| regression_mean(r, &self.weights))
            .collect()
    }
}

fn regression_mean(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + x[0].sin()
}

/// `y = w·x + sin(x₁) + ε`, with `x, w ~ N(0, I)` and `ε ~ N(0, noise_std²)`.
pub fn gen_synthetic_regression(n: usize, d: usize, noise_std: f64, stream: &mut RngStream) -> Result<SyntheticRegression> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidArgument(format!("need n, d ≥ 1 (n={n}, d={d})")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise_std must be non-negative, got {noise_std}")));
    }
    let mut weights = vec![0.0; d];
    stream.fill_normal(&mut weights);
    let mut x = vec![0.0; n * d];
    stream.fill_normal(&mut x);
    let y = x
        .chunks_exact(d)
        .map(|r| regression_mean(r, &weights) + noise_std * stream.normal())
        .collect();
    let dataset = Dataset::new(format!("linsin-{d}"), Tensor::matrix(n, d, x)?, Targets::Values(y))?;
    Ok(SyntheticRegression { dataset, weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_geometry() {
        let ds = gen_synthetic_classification(103, 4, 3, 20.0, &mut RngStream::derive(1, 2)).unwrap();
        let labels = ds.labels().unwrap();
        let counts: Vec<usize> = (0..4).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();
        assert_eq!(counts, vec![26, 26, 26, 25]);
        assert!(gen_synthetic_classification(3, 4, 2, 1.0, &mut RngStream::derive(1, 2)).is_err());
        assert!(gen_synthetic_classification(8, 4, 2, 0.0, &mut RngStream::derive(1, 2)).is_err());
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic_classification(50, 3, 2, 5.0, &mut RngStream::derive(9, 9)).unwrap();
        let b = gen_synthetic_classification(50, 3, 2, 5.0, &mut RngStream::derive(9, 9)).unwrap();
        assert_eq!(a, b);
        let a = gen_synthetic_regression(20, 3, 0.1, &mut RngStream::derive(9, 9)).unwrap();
        let b = gen_synthetic_regression(20, 3, 0.1, &mut RngStream::derive(9, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noiseless_regression_matches_truth() {
        let s = gen_synthetic_regression(40, 3, 0.0, &mut RngStream::derive(3, 3)).unwrap();
        assert_eq!(Targets::Values(s.truth()), s.dataset.targets);
    }
}

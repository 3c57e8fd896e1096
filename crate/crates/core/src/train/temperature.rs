//! Temperature scaling.

use crate::error::{Error, Result};
use crate::numerics::special::log_softmax;
use crate::numerics::Tensor;

pub const TAU_MIN: f64 = 0.05;
pub const TAU_MAX: f64 = 20.0;
const GRID: usize = 200;

fn nll_at(logits: &Tensor, labels: &[usize], tau: f64) -> f64 {
    let mut buf = vec![0.0; logits.cols()];
    let mut total = 0.0;
    for (row, &y) in logits.rows_iter().zip(labels) {
        for (b, v) in buf.iter_mut().zip(row) {
            *b = v / tau;
        }
        total -= log_softmax(&buf)[y];
    }
    total / labels.len() as f64
}

/// `τ ∈ [0.05, 20]` minimizing the mean NLL of `softmax(logits / τ)`.
///
/// A log-spaced grid locates the basin; golden-section search refines it.
pub fn fit_temperature(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() || logits.rows() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "temperature fit needs matching, non-empty logits ({} rows) and labels ({})",
            logits.rows(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {} classes", logits.cols())));
    }
    let (lo, hi) = (TAU_MIN.ln(), TAU_MAX.ln());
    let step = (hi - lo) / (GRID - 1) as f64;
    let f = |u: f64| nll_at(logits, labels, u.exp());
    let (best, _) = (0..GRID)
        .map(|i| (i, f(lo + step * i as f64)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut a = lo + step * best.saturating_sub(1) as f64;
    let mut b = (lo + step * (best + 1) as f64).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Ok((0.5 * (a + b)).exp().clamp(TAU_MIN, TAU_MAX))
}

pub fn apply_temperature(logits: &Tensor, tau: f64) -> Tensor {
    logits.map(|v| v / tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{argmax, RngStream};

    /// Labels drawn from `softmax(logits)`, so τ = 1 is the population optimum.
    fn calibrated(n: usize, c: usize, seed: u64) -> (Tensor, Vec<usize>) {
        let mut s = RngStream::derive(seed, 0);
        let mut logits = vec![0.0; n * c];
        s.fill_normal(&mut logits);
        logits.iter_mut().for_each(|v| *v *= 2.0);
        let t = Tensor::matrix(n, c, logits).unwrap();
        let labels = t
            .rows_iter()
            .map(|r| {
                let p = crate::numerics::softmax(r);
                let u = s.uniform();
                let mut acc = 0.0;
                p.iter()
                    .position(|&pk| {
                        acc += pk;
                        u < acc
                    })
                    .unwrap_or(c - 1)
            })
            .collect();
        (t, labels)
    }

    #[test]
    fn recovers_unit_temperature() {
        let (l, y) = calibrated(20_000, 4, 11);
        let tau = fit_temperature(&l, &y).unwrap();
        assert!((0.95..=1.05).contains(&tau), "{tau}");
    }

    #[test]
    fn divides_out_a_scale_factor() {
        let (l, y) = calibrated(20_000, 4, 12);
        let tau = fit_temperature(&l.map(|v| 2.0 * v), &y).unwrap();
        assert!((1.9..=2.1).contains(&tau), "{tau}");
    }

    #[test]
    fn matches_a_fine_grid() {
        let (l, y) = calibrated(2_000, 3, 13);
        let tau = fit_temperature(&l, &y).unwrap();
        let grid_best = (50..=20_000)
            .map(|i| i as f64 * 1e-3)
            .min_by(|a, b| nll_at(&l, &y, *a).total_cmp(&nll_at(&l, &y, *b)))
            .unwrap();
        assert!((tau - grid_best).abs() <= 1e-3, "{tau} vs {grid_best}");
    }

    #[test]
    fn argmax_is_preserved() {
        let (l, _) = calibrated(500, 5, 14);
        let scaled = apply_temperature(&l, 3.7);
        for (a, b) in l.rows_iter().zip(scaled.rows_iter()) {
            assert_eq!(argmax(a), argmax(b));
        }
    }

    #[test]
    fn single_class_validation_is_well_defined() {
        let l = Tensor::matrix(3, 2, vec![1.0, 0.0, 2.0, 0.5, 0.3, 0.2]).unwrap();
        let tau = fit_temperature(&l, &[0, 0, 0]).unwrap();
        assert!((TAU_MIN..=TAU_MAX).contains(&tau));
        assert!(fit_temperature(&l, &[0, 0]).is_err());
    }
}

//! Data losses, the single-sample negative ELBO, and their gradients.

use crate::data::Targets;
use crate::error::{Error, Result};
use crate::nn::{Gradients, Network, Noise, Tape};
use crate::numerics::special::log_softmax;
use crate::numerics::{RngStream, Tensor};

/// Mean over rows of `−log softmax(logits)[label]`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(cross_entropy_with_grad(logits, labels, false)?.0)
}

fn cross_entropy_with_grad(logits: &Tensor, labels: &[usize], want_grad: bool) -> Result<(f64, Vec<f64>)> {
    let n = logits.rows();
    let c = logits.cols();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows of logits", labels.len())));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cross-entropy of an empty batch".into()));
    }
    let mut total = 0.0;
    let mut grad = if want_grad { vec![0.0; n * c] } else { Vec::new() };
    for (i, (row, &y)) in logits.rows_iter().zip(labels).enumerate() {
        if y >= c {
            return Err(Error::InvalidArgument(format!("label {y} out of range for {c} classes")));
        }
        let lp = log_softmax(row);
        total -= lp[y];
        if want_grad {
            let g = &mut grad[i * c..(i + 1) * c];
            for (k, v) in g.iter_mut().enumerate() {
                *v = lp[k].exp() / n as f64;
            }
            g[y] -= 1.0 / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

/// Mean of `(pred − target)²`.
pub fn squared_error(pred: &[f64], target: &[f64]) -> Result<f64> {
    Ok(squared_error_with_grad(pred, target, false)?.0)
}

fn squared_error_with_grad(pred: &[f64], target: &[f64], want_grad: bool) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("squared error of an empty batch".into()));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let grad = if want_grad {
        pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect()
    } else {
        Vec::new()
    };
    Ok((loss, grad))
}

/// Data term for whichever target kind the batch carries.
pub fn data_loss(output: &Tensor, targets: &Targets) -> Result<f64> {
    Ok(data_loss_with_grad(output, targets, false)?.0)
}

pub(crate) fn data_loss_with_grad(output: &Tensor, targets: &Targets, want_grad: bool) -> Result<(f64, Vec<f64>)> {
    match targets {
        Targets::Classes { labels, .. } => cross_entropy_with_grad(output, labels, want_grad),
        Targets::Values(values) => {
            if output.cols() != 1 {
                return Err(Error::Shape(format!(
                    "regression needs a single output unit, network has {}",
                    output.cols()
                )));
            }
            squared_error_with_grad(output.data(), values, want_grad)
        }
    }
}

/// Reverse-mode gradients for a recorded forward pass.
pub fn backward(net: &Network, tape: &Tape, noise: Option<&Noise>, grad_out: &[f64]) -> Result<Gradients> {
    net.backward(tape, noise, grad_out)
}

/// Value and gradient of `data_loss + kl_weight · KL` for one noise draw.
///
/// `kl_weight` is `Some(1/N_r)` for variational networks and `None` otherwise.
pub fn objective_and_gradients(
    net: &Network,
    x: &Tensor,
    targets: &Targets,
    noise: Option<&Noise>,
    kl_weight: Option<f64>,
) -> Result<(f64, Gradients)> {
    let (out, tape) = net.forward_tape(x, noise)?;
    let (mut loss, grad_out) = data_loss_with_grad(&out, targets, true)?;
    let mut grads = net.backward(&tape, noise, &grad_out)?;
    if let Some(w) = kl_weight {
        loss += w * net.kl_total()?;
        net.accumulate_kl_gradients(&mut grads, w)?;
    }
    Ok((loss, grads))
}

/// Single-sample negative ELBO: `data_loss + (1/N_r) Σ_layers (KL_W + KL_z)`.
pub fn elbo_loss(net: &Network, x: &Tensor, targets: &Targets, n_round: usize, stream: &mut RngStream) -> Result<f64> {
    if !net.is_bayesian() {
        return Err(Error::InvalidArgument("the ELBO needs at least one variational layer".into()));
    }
    if n_round == 0 {
        return Err(Error::InvalidArgument("labeled-set size N_r must be positive".into()));
    }
    let out = net.stochastic_forward(x, stream, true)?;
    Ok(data_loss(&out, targets)? + net.kl_total()? / n_round as f64)
}

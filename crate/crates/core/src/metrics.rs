//! Accuracy, precision/F1, calibration error, and R².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, Tensor};

pub const DEFAULT_ECE_BINS: usize = 10;

fn check_rows(probs: &Tensor, labels: &[usize]) -> Result<()> {
    if probs.rows() != labels.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", probs.rows(), labels.len())));
    }
    Ok(())
}

/// Argmax of every row (ties go to the lowest class).
pub fn predictions(probs: &Tensor) -> Vec<usize> {
    probs.rows_iter().map(argmax).collect()
}

pub fn top1_accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    check_rows(probs, labels)?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let hits = predictions(probs).iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Rows whose true label is this class.
    pub support: usize,
    /// Rows predicted as this class.
    pub predicted: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest scores from predicted and true labels.
pub fn scores_from_predictions(pred: &[usize], labels: &[usize], classes: usize) -> Vec<ClassScores> {
    let mut tp = vec![0usize; classes];
    let mut npred = vec![0usize; classes];
    let mut ntrue = vec![0usize; classes];
    for (&p, &y) in pred.iter().zip(labels) {
        npred[p] += 1;
        ntrue[y] += 1;
        if p == y {
            tp[p] += 1;
        }
    }
    (0..classes)
        .map(|c| {
            let precision = ratio(tp[c], npred[c]);
            let recall = ratio(tp[c], ntrue[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: ntrue[c],
                predicted: npred[c],
            }
        })
        .collect()
}

/// Per-class precision and F1 of argmax predictions.
pub fn precision_f1_per_class(probs: &Tensor, labels: &[usize]) -> Result<Vec<ClassScores>> {
    check_rows(probs, labels)?;
    let c = probs.cols();
    if let Some(bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {c} classes")));
    }
    Ok(scores_from_predictions(&predictions(probs), labels, c))
}

/// Unweighted means of precision and F1 over classes that occur as a label
/// or a prediction.
pub fn macro_precision_f1(scores: &[ClassScores]) -> (f64, f64) {
    let present: Vec<&ClassScores> = scores.iter().filter(|s| s.support + s.predicted > 0).collect();
    if present.is_empty() {
        return (0.0, 0.0);
    }
    let n = present.len() as f64;
    (
        present.iter().map(|s| s.precision).sum::<f64>() / n,
        present.iter().map(|s| s.f1).sum::<f64>() / n,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EceBins {
    pub count: Vec<usize>,
    pub accuracy: Vec<f64>,
    pub confidence: Vec<f64>,
}

/// Bin `m` (0-based) covers `(m/M, (m+1)/M]`; a confidence of exactly 0 goes to the first bin.
pub fn ece_bin(confidence: f64, bins: usize) -> usize {
    ((confidence * bins as f64).ceil() as usize).clamp(1, bins) - 1
}

pub fn ece_bins(confidences: &[f64], correct: &[bool], bins: usize) -> Result<EceBins> {
    if bins == 0 {
        return Err(Error::InvalidArgument("ECE needs at least one bin".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::Shape(format!(
            "{} confidences for {} outcomes",
            confidences.len(),
            correct.len()
        )));
    }
    if let Some(c) = confidences.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::InvalidArgument(format!("confidence {c} outside [0, 1]")));
    }
    let mut count = vec![0usize; bins];
    let mut hits = vec![0.0; bins];
    let mut conf = vec![0.0; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let b = ece_bin(c, bins);
        count[b] += 1;
        conf[b] += c;
        if ok {
            hits[b] += 1.0;
        }
    }
    let accuracy = hits.iter().zip(&count).map(|(h, &n)| if n == 0 { 0.0 } else { h / n as f64 }).collect();
    let confidence = conf.iter().zip(&count).map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 }).collect();
    Ok(EceBins {
        count,
        accuracy,
        confidence,
    })
}

/// `Σ_m |B_m|/n · |acc(B_m) − conf(B_m)|` over `bins` equal-width bins.
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    let b = ece_bins(confidences, correct, bins)?;
    let n = confidences.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(b.count
        .iter()
        .zip(b.accuracy.iter().zip(&b.confidence))
        .map(|(&k, (a, c))| k as f64 / n as f64 * (a - c).abs())
        .sum())
}

fn confidence_and_correct(probs: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Vec<bool>)> {
    check_rows(probs, labels)?;
    Ok(probs
        .rows_iter()
        .zip(labels)
        .map(|(row, &y)| {
            let k = argmax(row);
            (row[k].clamp(0.0, 1.0), k == y)
        })
        .unzip())
}

/// ECE of argmax predictions with max-probability confidence.
pub fn ece_from_probs(probs: &Tensor, labels: &[usize], bins: usize) -> Result<f64> {
    let (conf, correct) = confidence_and_correct(probs, labels)?;
    ece(&conf, &correct, bins)
}

/// Reliability table behind [`ece_from_probs`].
pub fn ece_bins_from_probs(probs: &Tensor, labels: &[usize], bins: usize) -> Result<EceBins> {
    let (conf, correct) = confidence_and_correct(probs, labels)?;
    ece_bins(&conf, &correct, bins)
}

/// `1 − SSE/SST`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!("{} predictions for {} values", pred.len(), actual.len())));
    }
    if actual.len() < 2 {
        return Err(Error::InvalidArgument("R² needs at least two points".into()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let sst: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::InvalidArgument("R² is undefined when every actual value is equal".into()));
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, y)| (p - y).powi(2)).sum();
    Ok(1.0 - sse / sst)
}

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Mean squared error and its gradient `2 (pred - target) / n`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            lhs: (1, pred.len()),
            rhs: (1, target.len()),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("mse_loss"));
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

/// Softmax cross-entropy of one logit vector against a class index; the
/// gradient is `softmax(logits) - one_hot(label)`.
pub fn cross_entropy_loss(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::OutOfRange {
            what: "domain label",
            value: label as f64,
            lo: 0.0,
            hi: logits.len() as f64 - 1.0,
        });
    }
    let (arg_max, max) =
        logits.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
        );
    // log-sum-exp as max + log1p(sum of the remaining terms) keeps tiny losses exact
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg_max)
        .map(|(_, &v)| libm::exp(v - max))
        .sum();
    let lse = max + libm::log1p(rest);
    let loss = (max - logits[label]) + libm::log1p(rest);
    let mut grad: Vec<f64> = logits.iter().map(|&v| libm::exp(v - lse)).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Batch mean of per-sample MSE; the gradient already carries the `1/batch`.
pub fn mse_loss_batch(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss_batch",
            lhs: pred.shape(),
            rhs: target.shape(),
        });
    }
    let b = pred.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(pred.rows(), pred.cols());
    for i in 0..pred.rows() {
        let (l, g) = mse_loss(pred.row(i), target.row(i))?;
        total += l;
        for (dst, v) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = v / b;
        }
    }
    Ok((total / b, grad))
}

/// Batch mean of per-sample cross-entropy.
pub fn cross_entropy_batch(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy_batch",
            lhs: logits.shape(),
            rhs: (labels.len(), 1),
        });
    }
    let b = logits.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (i, &label) in labels.iter().enumerate() {
        let (l, g) = cross_entropy_loss(logits.row(i), label)?;
        total += l;
        for (dst, v) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = v / b;
        }
    }
    Ok((total / b, grad))
}

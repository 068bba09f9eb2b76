//! RMSE and range-normalized RMSE over predicted joint angles.
//!
//! Both average over every (sample, angle) entry. For NRMSE each angle is
//! divided by its range (max - min of the true values in the evaluation set)
//! before the error is taken.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rmse: f64,
    pub nrmse: f64,
    pub n_angles: usize,
    pub n_samples: usize,
    pub ranges: Vec<f64>,
}

fn check(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: pred.shape(),
            rhs: target.shape(),
        });
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("metric input"));
    }
    Ok(())
}

pub fn rmse(pred: &Matrix, target: &Matrix) -> Result<f64> {
    check(pred, target)?;
    let sum: f64 = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(libm::sqrt(sum / pred.len() as f64))
}

pub fn nrmse(pred: &Matrix, target: &Matrix, ranges: &[f64]) -> Result<f64> {
    check(pred, target)?;
    if ranges.len() != pred.cols() {
        return Err(Error::ShapeMismatch {
            op: "nrmse ranges",
            lhs: pred.shape(),
            rhs: (1, ranges.len()),
        });
    }
    if let Some(angle) = ranges.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::ZeroRange { angle });
    }
    let cols = pred.cols();
    let mut sum = 0.0;
    for (row_p, row_t) in pred
        .as_slice()
        .chunks_exact(cols)
        .zip(target.as_slice().chunks_exact(cols))
    {
        for ((p, t), r) in row_p.iter().zip(row_t).zip(ranges) {
            let d = t / r - p / r;
            sum += d * d;
        }
    }
    Ok(libm::sqrt(sum / pred.len() as f64))
}

/// Per-angle `max - min` of the true values.
pub fn angle_ranges(target: &Matrix) -> Vec<f64> {
    (0..target.cols())
        .map(|j| {
            let (lo, hi) = (0..target.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                let v = target[(i, j)];
                (lo.min(v), hi.max(v))
            });
            hi - lo
        })
        .collect()
}

/// RMSE and NRMSE with ranges taken from `target` itself.
pub fn evaluate(pred: &Matrix, target: &Matrix) -> Result<MetricReport> {
    let ranges = angle_ranges(target);
    Ok(MetricReport {
        rmse: rmse(pred, target)?,
        nrmse: nrmse(pred, target, &ranges)?,
        n_angles: target.cols(),
        n_samples: target.rows(),
        ranges,
    })
}

/// Mean and population standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

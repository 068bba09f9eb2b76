use alloc::vec::Vec;

use super::Sample;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose variance was zero; their scale was clamped to 1.
    pub clamped: Vec<usize>,
}

impl ChannelStats {
    pub fn identity(width: usize) -> Self {
        ChannelStats {
            mean: alloc::vec![0.0; width],
            std: alloc::vec![1.0; width],
            clamped: Vec::new(),
        }
    }

    /// Population statistics of `rows` (Welford's update).
    pub fn fit<'a, I>(rows: I, width: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut n = 0usize;
        let mut mean = alloc::vec![0.0; width];
        let mut m2 = alloc::vec![0.0; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    op: "ChannelStats::fit",
                    lhs: (1, width),
                    rhs: (1, row.len()),
                });
            }
            n += 1;
            for j in 0..width {
                let delta = row[j] - mean[j];
                mean[j] += delta / n as f64;
                m2[j] += delta * (row[j] - mean[j]);
            }
        }
        if n == 0 {
            return Err(Error::EmptyInput("normalization rows"));
        }
        let mut clamped = Vec::new();
        let std = m2
            .iter()
            .enumerate()
            .map(|(j, &m)| {
                let var = m / n as f64;
                if var > 1e-12 {
                    libm::sqrt(var)
                } else {
                    clamped.push(j);
                    1.0
                }
            })
            .collect();
        Ok(ChannelStats { mean, std, clamped })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }

    pub fn apply_matrix(&self, m: &mut Matrix) {
        let w = m.cols();
        for row in m.as_mut_slice().chunks_exact_mut(w) {
            self.apply(row);
        }
    }

    pub fn invert_matrix(&self, m: &mut Matrix) {
        let w = m.cols();
        for row in m.as_mut_slice().chunks_exact_mut(w) {
            self.invert(row);
        }
    }
}

/// Standardizes every channel of `samples` (the training portion) and
/// returns the statistics for reuse on validation and test samples.
pub fn normalize(samples: &[Sample]) -> Result<(Vec<Sample>, ChannelStats)> {
    let first = samples.first().ok_or(Error::EmptyInput("samples"))?;
    let width = first.window.cols();
    let stats = ChannelStats::fit(
        samples
            .iter()
            .flat_map(|s| (0..s.window.rows()).map(move |i| s.window.row(i))),
        width,
    )?;
    Ok((apply_stats(samples, &stats), stats))
}

/// Applies previously fitted statistics.
pub fn apply_stats(samples: &[Sample], stats: &ChannelStats) -> Vec<Sample> {
    samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            stats.apply_matrix(&mut out.window);
            out
        })
        .collect()
}

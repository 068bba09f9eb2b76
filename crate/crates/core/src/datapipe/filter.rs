//! Zero-phase Butterworth low-pass filtering.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One second-order section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Filters `x` in place, starting from the steady state for a constant
    /// input equal to `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        // steady state of a unit-DC-gain section
        let mut s1 = (1.0 - b0) * first;
        let mut s2 = (b2 - a2) * first;
        for v in x.iter_mut() {
            let input = *v;
            let out = b0 * input + s1;
            s1 = b1 * input - a1 * out + s2;
            s2 = b2 * input - a2 * out;
            *v = out;
        }
    }
}

/// Even-order digital Butterworth low-pass as a cascade of biquads, designed
/// by the bilinear transform with the cutoff prewarped, so the magnitude at
/// the cutoff is exactly `1/sqrt(2)` and the DC gain is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    sections: Vec<Biquad>,
    cutoff: f64,
    sample_rate: f64,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff: f64, sample_rate: f64) -> Result<Self> {
        if order == 0 || !order.is_multiple_of(2) {
            return Err(Error::InvalidConfig(alloc::format!(
                "filter order must be even and positive, got {order}"
            )));
        }
        let nyquist = sample_rate / 2.0;
        if !(cutoff > 0.0) || cutoff >= nyquist {
            return Err(Error::OutOfRange {
                what: "cutoff frequency",
                value: cutoff,
                lo: 0.0,
                hi: nyquist,
            });
        }
        let k = libm::tan(core::f64::consts::PI * cutoff / sample_rate);
        let k2 = k * k;
        let sections = (0..order / 2)
            .map(|i| {
                // analog pole pair at angle theta from the negative real axis
                let theta = core::f64::consts::PI * (2 * i + 1) as f64 / (2 * order) as f64;
                let q_inv = 2.0 * libm::cos(theta);
                let norm = 1.0 + k * q_inv + k2;
                let b0 = k2 / norm;
                Biquad {
                    b: [b0, 2.0 * b0, b0],
                    a: [2.0 * (k2 - 1.0) / norm, (1.0 - k * q_inv + k2) / norm],
                }
            })
            .collect();
        Ok(Butterworth {
            sections,
            cutoff,
            sample_rate,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Causal single pass.
    pub fn filter(&self, values: &[f64]) -> Vec<f64> {
        let mut out = values.to_vec();
        for s in &self.sections {
            s.run(&mut out);
        }
        out
    }

    /// Forward-backward pass over an odd-reflected extension of the signal.
    /// Output has the input's length and no phase shift; the magnitude
    /// response is the single-pass response squared.
    pub fn filtfilt(&self, values: &[f64]) -> Vec<f64> {
        let n = values.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad_len().min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (values[0], values[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - values[i]));
        ext.extend_from_slice(values);
        ext.extend((1..=pad).map(|i| 2.0 * last - values[n - 1 - i]));
        for s in &self.sections {
            s.run(&mut ext);
        }
        ext.reverse();
        for s in &self.sections {
            s.run(&mut ext);
        }
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Three cutoff periods of padding on each side.
    fn pad_len(&self) -> usize {
        libm::ceil(3.0 * self.sample_rate / self.cutoff) as usize
    }
}

/// Fourth-order zero-phase Butterworth low-pass of one signal.
pub fn lowpass(values: &[f64], sample_rate: f64, cutoff: f64) -> Result<Vec<f64>> {
    Ok(Butterworth::lowpass(4, cutoff, sample_rate)?.filtfilt(values))
}

/// Applies a zero-phase filter to every column.
pub fn filtfilt_columns(filter: &Butterworth, m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let mut column = Vec::with_capacity(m.rows());
    for j in 0..m.cols() {
        column.clear();
        column.extend((0..m.rows()).map(|i| m[(i, j)]));
        for (i, v) in filter.filtfilt(&column).into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| libm::sin(core::f64::consts::TAU * freq * i as f64 / fs))
            .collect()
    }

    fn amplitude(x: &[f64]) -> f64 {
        x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn constant_is_preserved() {
        let x = alloc::vec![3.25; 500];
        let y = lowpass(&x, 200.0, 10.0).unwrap();
        assert_eq!(y.len(), 500);
        assert!(y.iter().all(|v| (v - 3.25).abs() < 1e-9));
    }

    #[test]
    fn half_amplitude_at_cutoff() {
        for (fs, fc) in [(200.0, 10.0), (200.0, 4.0)] {
            let x = sine(fc, fs, 4000);
            let y = lowpass(&x, fs, fc).unwrap();
            let ratio = amplitude(&y[1000..3000]);
            assert!((ratio - 0.5).abs() < 0.05, "fc {fc}: {ratio}");
            let stop = lowpass(&sine(4.0 * fc, fs, 4000), fs, fc).unwrap();
            assert!(amplitude(&stop[1000..3000]) < 0.01);
        }
    }

    #[test]
    fn rejects_cutoff_at_or_above_nyquist() {
        assert!(lowpass(&[1.0, 2.0], 200.0, 100.0).is_err());
        assert!(lowpass(&[1.0, 2.0], 200.0, 0.0).is_err());
        assert!(Butterworth::lowpass(3, 10.0, 200.0).is_err());
    }

    #[test]
    fn tiny_inputs() {
        assert!(lowpass(&[], 200.0, 10.0).unwrap().is_empty());
        assert_eq!(lowpass(&[2.0], 200.0, 10.0).unwrap().len(), 1);
    }

    #[test]
    fn dc_gain_of_design_is_one() {
        for order in [2, 4, 6] {
            let f = Butterworth::lowpass(order, 4.0, 200.0).unwrap();
            let gain: f64 = f
                .sections
                .iter()
                .map(|s| (s.b[0] + s.b[1] + s.b[2]) / (1.0 + s.a[0] + s.a[1]))
                .product();
            assert!((gain - 1.0).abs() < 1e-12);
        }
    }
}

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Emg,
    Angles,
}

/// Lowest and highest raw sEMG value an 8-bit armband reports.
pub const EMG_MIN: f64 = -128.0;
pub const EMG_MAX: f64 = 128.0;

/// One timestamped recording of one device.
#[derive(Debug, Clone, PartialEq)]
pub struct RawStream {
    pub subject_id: u32,
    pub session_id: u32,
    pub kind: StreamKind,
    /// Milliseconds, strictly increasing.
    pub timestamps: Vec<f64>,
    /// One row per timestamp.
    pub frames: Matrix,
    pub nominal_rate: f64,
}

impl RawStream {
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.is_empty() {
            return Err(Error::EmptyInput("stream"));
        }
        if self.frames.rows() != self.timestamps.len() {
            return Err(Error::ShapeMismatch {
                op: "stream frames vs timestamps",
                lhs: self.frames.shape(),
                rhs: (self.timestamps.len(), 1),
            });
        }
        if let Some(i) = self.timestamps.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig(alloc::format!(
                "timestamps not strictly increasing at row {}",
                i + 1
            )));
        }
        if !self.frames.is_finite() {
            return Err(Error::NonFinite {
                context: "stream frames".into(),
            });
        }
        if self.kind == StreamKind::Emg {
            if let Some(&v) = self
                .frames
                .as_slice()
                .iter()
                .find(|v| !(EMG_MIN..=EMG_MAX).contains(*v))
            {
                return Err(Error::OutOfRange {
                    what: "emg sample",
                    value: v,
                    lo: EMG_MIN,
                    hi: EMG_MAX,
                });
            }
        }
        Ok(())
    }
}

/// Emg frames paired with their nearest angle frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRecording {
    pub subject_id: u32,
    pub session_id: u32,
    /// Emg timestamps of the surviving pairs.
    pub timestamps: Vec<f64>,
    /// Timestamps of the angle frames each row was paired with.
    pub angle_timestamps: Vec<f64>,
    pub emg: Matrix,
    pub angles: Matrix,
    /// Emg frames without an angle frame within the gap.
    pub dropped: usize,
}

impl AlignedRecording {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.timestamps
            .iter()
            .zip(&self.angle_timestamps)
            .map(|(a, b)| libm::fabs(a - b))
    }
}

/// Pairs every emg frame with the angle frame closest in time (earlier frame
/// on ties) and drops pairs further apart than `max_gap_ms`.
pub fn align(emg: &RawStream, angles: &RawStream, max_gap_ms: f64) -> Result<AlignedRecording> {
    emg.validate()?;
    angles.validate()?;
    if emg.kind != StreamKind::Emg || angles.kind != StreamKind::Angles {
        return Err(Error::InvalidConfig("align expects an emg and an angle stream".into()));
    }
    if (emg.subject_id, emg.session_id) != (angles.subject_id, angles.session_id) {
        return Err(Error::InvalidConfig("streams come from different sessions".into()));
    }
    let at = &angles.timestamps;
    let mut keep = Vec::new();
    let mut j = 0;
    for (i, &t) in emg.timestamps.iter().enumerate() {
        while j + 1 < at.len() && at[j + 1] <= t {
            j += 1;
        }
        // candidates: at[j] (last at or before t, unless t precedes all) and at[j + 1]
        let mut best = j;
        if j + 1 < at.len() && libm::fabs(at[j + 1] - t) < libm::fabs(at[j] - t) {
            best = j + 1;
        }
        if libm::fabs(at[best] - t) <= max_gap_ms {
            keep.push((i, best));
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptyOverlap {
            subject: emg.subject_id,
            session: emg.session_id,
        });
    }
    let mut emg_m = Matrix::zeros(keep.len(), emg.frames.cols());
    let mut ang_m = Matrix::zeros(keep.len(), angles.frames.cols());
    for (r, &(i, k)) in keep.iter().enumerate() {
        emg_m.row_mut(r).copy_from_slice(emg.frames.row(i));
        ang_m.row_mut(r).copy_from_slice(angles.frames.row(k));
    }
    Ok(AlignedRecording {
        subject_id: emg.subject_id,
        session_id: emg.session_id,
        timestamps: keep.iter().map(|&(i, _)| emg.timestamps[i]).collect(),
        angle_timestamps: keep.iter().map(|&(_, k)| at[k]).collect(),
        emg: emg_m,
        angles: ang_m,
        dropped: emg.timestamps.len() - keep.len(),
    })
}

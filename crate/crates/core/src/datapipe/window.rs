use alloc::vec::Vec;

use super::AlignedRecording;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Rows per network input window.
pub const WINDOW_LEN: usize = 128;

/// One network input with its regression target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `window x channels` emg rows.
    pub window: Matrix,
    /// Joint angles at the window's last row.
    pub target: Vec<f64>,
    pub domain_label: usize,
    pub subject_id: u32,
    pub session_id: u32,
    pub end_timestamp: f64,
}

/// Last-row indices of the sliding windows over `n_rows` rows: windows start
/// at `0, stride, 2 * stride, ...` and must fit entirely.
pub fn window_ends(n_rows: usize, window: usize, stride: usize) -> Result<Vec<usize>> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidConfig("window and stride must be positive".into()));
    }
    if n_rows < window {
        return Err(Error::TooShort {
            what: "recording",
            needed: window,
            got: n_rows,
        });
    }
    Ok((0..=(n_rows - window) / stride)
        .map(|k| k * stride + window - 1)
        .collect())
}

/// Sliding windows over a recording; the target is the angle vector at the
/// last row.
pub fn make_windows(rec: &AlignedRecording, window: usize, stride: usize) -> Result<Vec<Sample>> {
    make_windows_masked(rec, window, stride, None)
}

/// As [`make_windows`], discarding every window that contains a row flagged
/// in `excluded`.
pub fn make_windows_masked(
    rec: &AlignedRecording,
    window: usize,
    stride: usize,
    excluded: Option<&[bool]>,
) -> Result<Vec<Sample>> {
    if let Some(mask) = excluded {
        if mask.len() != rec.len() {
            return Err(Error::ShapeMismatch {
                op: "window exclusion mask",
                lhs: (rec.len(), 1),
                rhs: (mask.len(), 1),
            });
        }
    }
    let ends = window_ends(rec.len(), window, stride)?;
    Ok(ends
        .into_iter()
        .filter(|&end| excluded.is_none_or(|m| !m[end + 1 - window..=end].iter().any(|&x| x)))
        .map(|end| Sample {
            window: rec.emg.slice_rows(end + 1 - window, end + 1),
            target: rec.angles.row(end).to_vec(),
            domain_label: 0,
            subject_id: rec.subject_id,
            session_id: rec.session_id,
            end_timestamp: rec.timestamps[end],
        })
        .collect())
}

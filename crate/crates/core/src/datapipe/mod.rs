//! From raw two-device recordings to normalized training windows: timestamp
//! alignment, zero-phase low-pass filtering, sliding windows and
//! per-channel standardization.

mod align;
mod dataset;
mod filter;
mod normalize;
mod window;

pub use align::{align, AlignedRecording, RawStream, StreamKind, EMG_MAX, EMG_MIN};
pub use dataset::{Dataset, DatasetView, Normalization, WindowRef};
pub use filter::{filtfilt_columns, lowpass, Butterworth};
pub use normalize::{apply_stats, normalize, ChannelStats};
pub use window::{make_windows, make_windows_masked, window_ends, Sample, WINDOW_LEN};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub max_gap_ms: f64,
    pub emg_cutoff_hz: f64,
    pub angle_cutoff_hz: f64,
    pub filter_order: usize,
    pub window: usize,
    pub stride: usize,
    /// Rows at each recording end that may not serve as window targets.
    pub edge_trim: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_gap_ms: 10.0,
            emg_cutoff_hz: 10.0,
            angle_cutoff_hz: 4.0,
            filter_order: 4,
            window: WINDOW_LEN,
            stride: 8,
            edge_trim: 64,
        }
    }
}

/// Aligns one session, then low-passes the emg and angle columns of the
/// aligned table at the emg stream's nominal rate.
pub fn preprocess_session(emg: &RawStream, angles: &RawStream, config: &PipelineConfig) -> Result<AlignedRecording> {
    let mut rec = align(emg, angles, config.max_gap_ms)?;
    let rate = emg.nominal_rate;
    let emg_filter = Butterworth::lowpass(config.filter_order, config.emg_cutoff_hz, rate)?;
    let angle_filter = Butterworth::lowpass(config.filter_order, config.angle_cutoff_hz, rate)?;
    rec.emg = filtfilt_columns(&emg_filter, &rec.emg);
    rec.angles = filtfilt_columns(&angle_filter, &rec.angles);
    Ok(rec)
}

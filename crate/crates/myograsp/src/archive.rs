//! Binary archive of preprocessed recordings plus their window index.
//!
//! Layout (little-endian): magic `MYOARCHV`, format version, mode name,
//! pipeline settings, linear-baseline NRMSE (NaN if unknown), then each
//! recording (ids, drop count, timestamps, paired angle timestamps, emg and
//! angle matrices with shape headers), then the window index as
//! (recording, last row) pairs.

use std::fs;
use std::path::Path;

use myograsp_core::datapipe::{AlignedRecording, Dataset, PipelineConfig, WindowRef};
use myograsp_core::synthgen::Mode;
use sha2::{Digest, Sha256};

use crate::binio::{ReadResult, Reader, Writer};
use crate::error::{AppError, Result};

const MAGIC: &[u8; 8] = b"MYOARCHV";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub mode: Mode,
    pub pipeline: PipelineConfig,
    pub linear_baseline_nrmse: Option<f64>,
    pub dataset: Dataset,
}

pub fn encode(a: &Archive) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(a.mode.name());
    let p = &a.pipeline;
    w.f64(p.max_gap_ms);
    w.f64(p.emg_cutoff_hz);
    w.f64(p.angle_cutoff_hz);
    w.u32(p.filter_order as u32);
    w.u32(p.window as u32);
    w.u32(p.stride as u32);
    w.u32(p.edge_trim as u32);
    w.f64(a.linear_baseline_nrmse.unwrap_or(f64::NAN));
    let d = &a.dataset;
    w.u32(d.recordings.len() as u32);
    for r in &d.recordings {
        w.u32(r.subject_id);
        w.u32(r.session_id);
        w.u64(r.dropped as u64);
        w.u64(r.timestamps.len() as u64);
        w.f64s(&r.timestamps);
        w.f64s(&r.angle_timestamps);
        w.matrix(&r.emg);
        w.matrix(&r.angles);
    }
    w.u64(d.windows.len() as u64);
    for win in &d.windows {
        w.u32(win.recording);
        w.u32(win.end_row);
    }
    w.into_bytes()
}

pub fn decode(bytes: &[u8]) -> ReadResult<Archive> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err("not a myograsp archive".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported archive version {version}"));
    }
    let mode_name = r.str()?;
    let mode = Mode::parse(&mode_name).ok_or_else(|| format!("unknown mode {mode_name:?}"))?;
    let pipeline = PipelineConfig {
        max_gap_ms: r.f64()?,
        emg_cutoff_hz: r.f64()?,
        angle_cutoff_hz: r.f64()?,
        filter_order: r.u32()? as usize,
        window: r.u32()? as usize,
        stride: r.u32()? as usize,
        edge_trim: r.u32()? as usize,
    };
    let baseline = r.f64()?;
    let n_rec = r.u32()? as usize;
    let mut recordings = Vec::with_capacity(n_rec);
    for _ in 0..n_rec {
        let subject_id = r.u32()?;
        let session_id = r.u32()?;
        let dropped = r.u64()? as usize;
        let n = r.u64()? as usize;
        let timestamps = r.f64s(n)?;
        let angle_timestamps = r.f64s(n)?;
        let emg = r.matrix()?;
        let angles = r.matrix()?;
        if emg.rows() != n || angles.rows() != n || angles.cols() != mode.angle_count() {
            return Err(format!("recording s{subject_id}_r{session_id}: inconsistent shapes"));
        }
        recordings.push(AlignedRecording {
            subject_id,
            session_id,
            timestamps,
            angle_timestamps,
            emg,
            angles,
            dropped,
        });
    }
    let n_win = r.u64()? as usize;
    let mut windows = Vec::with_capacity(n_win);
    for _ in 0..n_win {
        let w = WindowRef {
            recording: r.u32()?,
            end_row: r.u32()?,
        };
        let rec = recordings
            .get(w.recording as usize)
            .ok_or("window names a missing recording")?;
        if (w.end_row as usize) >= rec.len() || (w.end_row as usize + 1) < pipeline.window {
            return Err("window outside its recording".into());
        }
        windows.push(w);
    }
    r.expect_end()?;
    Ok(Archive {
        mode,
        pipeline: pipeline.clone(),
        linear_baseline_nrmse: (!baseline.is_nan()).then_some(baseline),
        dataset: Dataset {
            angle_count: mode.angle_count(),
            window_len: pipeline.window,
            recordings,
            windows,
        },
    })
}

pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes the archive and returns its SHA-256.
pub fn write_archive(path: &Path, a: &Archive) -> Result<String> {
    let bytes = encode(a);
    fs::write(path, &bytes).map_err(AppError::io(path))?;
    Ok(checksum(&bytes))
}

/// Reads an archive and its SHA-256.
pub fn read_archive(path: &Path) -> Result<(Archive, String)> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    let a = decode(&bytes).map_err(|m| AppError::format(path, m))?;
    Ok((a, checksum(&bytes)))
}

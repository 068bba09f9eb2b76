//! Raw recording CSV files and the dataset manifest.
//!
//! One CSV per (subject, session, stream): header `timestamp_ms,ch0..ch7`
//! for emg or `timestamp_ms,angle0..angleN` for angles, named
//! `s<subject>_r<session>_<emg|angles>.csv`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use myograsp_core::datapipe::{RawStream, StreamKind};
use myograsp_core::synthgen::Mode;
use myograsp_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{csv_error, AppError, Result};

pub const MANIFEST_NAME: &str = "manifest.toml";

pub fn stream_file_name(subject: u32, session: u32, kind: StreamKind) -> String {
    let tag = match kind {
        StreamKind::Emg => "emg",
        StreamKind::Angles => "angles",
    };
    format!("s{subject}_r{session}_{tag}.csv")
}

fn column_prefix(kind: StreamKind) -> &'static str {
    match kind {
        StreamKind::Emg => "ch",
        StreamKind::Angles => "angle",
    }
}

/// Writes a time-indexed matrix as CSV with a `timestamp_ms` column
/// followed by `<prefix>0..`.
pub fn write_table(path: &Path, prefix: &str, timestamps: &[f64], frames: &Matrix) -> Result<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["timestamp_ms".to_string()];
    header.extend((0..frames.cols()).map(|j| format!("{prefix}{j}")));
    w.write_record(&header).map_err(csv_error(path))?;
    let mut record = Vec::with_capacity(frames.cols() + 1);
    for (i, t) in timestamps.iter().enumerate() {
        record.clear();
        record.push(t.to_string());
        record.extend(frames.row(i).iter().map(f64::to_string));
        w.write_record(&record).map_err(csv_error(path))?;
    }
    w.flush().map_err(AppError::io(path))
}

pub fn write_stream(path: &Path, stream: &RawStream) -> Result<()> {
    write_table(path, column_prefix(stream.kind), &stream.timestamps, &stream.frames)
}

/// Reads a time-indexed CSV written by [`write_table`], checking the
/// header against `prefix` and, if given, the column count.
pub fn read_table(path: &Path, prefix: &str, columns: Option<usize>) -> Result<(Vec<f64>, Matrix)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let header = r.headers().map_err(csv_error(path))?.clone();
    let width = header.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("timestamp_ms".to_string())
        .chain((0..width).map(|j| format!("{prefix}{j}")))
        .collect();
    if width == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(AppError::format(
            path,
            format!("bad header {:?}", header.iter().collect::<Vec<_>>()),
        ));
    }
    if let Some(n) = columns {
        if width != n {
            return Err(AppError::format(
                path,
                format!("expected {n} {prefix} columns, found {width}"),
            ));
        }
    }
    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error(path))?;
        let mut values = rec.iter().map(|f| f.trim().parse::<f64>());
        let bad = || AppError::format(path, format!("row {}: not a number", line + 2));
        timestamps.push(values.next().ok_or_else(bad)?.map_err(|_| bad())?);
        for v in values {
            data.push(v.map_err(|_| bad())?);
        }
    }
    let frames = Matrix::from_vec(timestamps.len(), width, data).map_err(|e| AppError::format(path, e.to_string()))?;
    Ok((timestamps, frames))
}

pub fn read_stream(
    path: &Path,
    kind: StreamKind,
    subject: u32,
    session: u32,
    nominal_rate: f64,
    columns: usize,
) -> Result<RawStream> {
    let (timestamps, frames) = read_table(path, column_prefix(kind), Some(columns))?;
    let stream = RawStream {
        subject_id: subject,
        session_id: session,
        kind,
        timestamps,
        frames,
        nominal_rate,
    };
    stream.validate().map_err(|e| AppError::format(path, e.to_string()))?;
    Ok(stream)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub subject: u32,
    pub session: u32,
    pub emg: PathBuf,
    pub angles: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<PathBuf>,
}

/// Lists every recording of a dataset. Paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub mode: String,
    pub angle_count: usize,
    pub emg_channels: usize,
    pub emg_rate: f64,
    pub angle_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// NRMSE of the per-session linear read-out, measured at generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_baseline_nrmse: Option<f64>,
    #[serde(rename = "recording")]
    pub recordings: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn mode(&self) -> Result<Mode> {
        let mode = Mode::parse(&self.mode).ok_or_else(|| AppError::Config(format!("unknown mode {:?}", self.mode)))?;
        if mode.angle_count() != self.angle_count {
            return Err(AppError::Config(format!(
                "mode {} implies {} angles, manifest says {}",
                self.mode,
                mode.angle_count(),
                self.angle_count
            )));
        }
        Ok(mode)
    }

    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.recordings.iter().map(|r| r.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| AppError::format(path, e.to_string()))?;
        let mut f = BufWriter::new(File::create(path).map_err(AppError::io(path))?);
        f.write_all(text.as_bytes()).map_err(AppError::io(path))?;
        f.flush().map_err(AppError::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(AppError::io(path))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| AppError::format(path, e.to_string()))?;
        m.mode()?;
        if m.recordings.is_empty() {
            return Err(AppError::format(path, "no recordings listed"));
        }
        Ok(m)
    }

    /// Loads both streams of entry `i`, resolving paths against `root`.
    pub fn load_pair(&self, root: &Path, i: usize) -> Result<(RawStream, RawStream)> {
        let e = &self.recordings[i];
        let emg = read_stream(
            &root.join(&e.emg),
            StreamKind::Emg,
            e.subject,
            e.session,
            self.emg_rate,
            self.emg_channels,
        )?;
        let angles = read_stream(
            &root.join(&e.angles),
            StreamKind::Angles,
            e.subject,
            e.session,
            self.angle_rate,
            self.angle_count,
        )?;
        Ok((emg, angles))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(stream_file_name(3, 1, StreamKind::Emg));
        assert!(path.ends_with("s3_r1_emg.csv"));
        let frames = Matrix::from_vec(2, 8, (0..16).map(|v| v as f64 - 7.0).collect()).unwrap();
        let stream = RawStream {
            subject_id: 3,
            session_id: 1,
            kind: StreamKind::Emg,
            timestamps: vec![0.5, 5.123],
            frames,
            nominal_rate: 200.0,
        };
        write_stream(&path, &stream).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("timestamp_ms,ch0,ch1,ch2,ch3,ch4,ch5,ch6,ch7\n0.5,-7,"));
        let back = read_stream(&path, StreamKind::Emg, 3, 1, 200.0, 8).unwrap();
        assert_eq!(back, stream);
        assert!(read_stream(&path, StreamKind::Angles, 3, 1, 100.0, 15).is_err());
    }

    #[test]
    fn malformed_rows_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "timestamp_ms,angle0\n0,1\n5,abc\n").unwrap();
        let err = read_table(&path, "angle", None).unwrap_err();
        assert!(matches!(err, AppError::Format { .. }));
        assert_eq!(err.exit_code(), 3);
        let missing = read_table(&dir.path().join("none.csv"), "angle", None).unwrap_err();
        assert_eq!(missing.exit_code(), 3);
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            mode: "mobile".into(),
            angle_count: 18,
            emg_channels: 8,
            emg_rate: 200.0,
            angle_rate: 100.0,
            seed: Some(4),
            linear_baseline_nrmse: Some(0.125),
            recordings: vec![ManifestEntry {
                subject: 0,
                session: 2,
                emg: "s0_r2_emg.csv".into(),
                angles: "s0_r2_angles.csv".into(),
                latent: None,
            }],
        };
        let path = dir.path().join(MANIFEST_NAME);
        m.write(&path).unwrap();
        assert_eq!(Manifest::read(&path).unwrap(), m);
        let wrong = Manifest { angle_count: 15, ..m };
        wrong.write(&path).unwrap();
        assert!(Manifest::read(&path).is_err());
    }
}

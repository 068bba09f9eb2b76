use alloc::vec;
use alloc::vec::Vec;

use super::{window_ends, AlignedRecording, ChannelStats, Sample};
use crate::cells::SeqBatch;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::training::{Batch, BatchSource};

/// A window stored by reference: recording index and last row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub recording: u32,
    pub end_row: u32,
}

/// Preprocessed recordings plus the index of every usable window.
///
/// Windows are kept as references into the recordings; a full default
/// dataset would not fit in memory as materialized windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub angle_count: usize,
    pub window_len: usize,
    pub recordings: Vec<AlignedRecording>,
    pub windows: Vec<WindowRef>,
}

impl Dataset {
    /// Indexes sliding windows over every recording. Targets within
    /// `edge_trim` rows of either end (filter transients) are skipped.
    pub fn from_recordings(
        recordings: Vec<AlignedRecording>,
        window_len: usize,
        stride: usize,
        edge_trim: usize,
    ) -> Result<Self> {
        let first = recordings.first().ok_or(Error::EmptyInput("recordings"))?;
        let angle_count = first.angles.cols();
        let channels = first.emg.cols();
        let mut windows = Vec::new();
        for (r, rec) in recordings.iter().enumerate() {
            if rec.angles.cols() != angle_count || rec.emg.cols() != channels {
                return Err(Error::ShapeMismatch {
                    op: "dataset recordings",
                    lhs: (channels, angle_count),
                    rhs: (rec.emg.cols(), rec.angles.cols()),
                });
            }
            let n = rec.len();
            windows.extend(
                window_ends(n, window_len, stride)?
                    .into_iter()
                    .filter(|&end| end >= edge_trim && end + edge_trim < n)
                    .map(|end| WindowRef {
                        recording: r as u32,
                        end_row: end as u32,
                    }),
            );
        }
        Ok(Dataset {
            angle_count,
            window_len,
            recordings,
            windows,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.recordings.first().map_or(0, |r| r.emg.cols())
    }

    fn locate(&self, i: usize) -> (&AlignedRecording, usize) {
        let w = self.windows[i];
        (&self.recordings[w.recording as usize], w.end_row as usize)
    }

    /// Emg rows of window `i`, row-major and contiguous.
    pub fn window(&self, i: usize) -> &[f64] {
        let (rec, end) = self.locate(i);
        rec.emg.rows_slice(end + 1 - self.window_len, end + 1)
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let (rec, end) = self.locate(i);
        rec.angles.row(end)
    }

    /// Recording index and row range (inclusive first, exclusive last).
    pub fn rows(&self, i: usize) -> (usize, usize, usize) {
        let w = self.windows[i];
        let end = w.end_row as usize;
        (w.recording as usize, end + 1 - self.window_len, end + 1)
    }

    /// First and last timestamp covered by window `i`.
    pub fn span_ms(&self, i: usize) -> (f64, f64) {
        let (rec, end) = self.locate(i);
        (rec.timestamps[end + 1 - self.window_len], rec.timestamps[end])
    }

    pub fn sample(&self, i: usize, domain_label: usize) -> Sample {
        let (rec, end) = self.locate(i);
        Sample {
            window: Matrix::from_vec(self.window_len, rec.emg.cols(), self.window(i).to_vec()).expect("window shape"),
            target: self.target(i).to_vec(),
            domain_label,
            subject_id: rec.subject_id,
            session_id: rec.session_id,
            end_timestamp: rec.timestamps[end],
        }
    }
}

/// Input and target standardization fitted on training windows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input: ChannelStats,
    pub target: ChannelStats,
}

impl Normalization {
    /// Input statistics come from the distinct rows the training windows
    /// cover; target statistics from the training targets.
    pub fn fit(data: &Dataset, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training windows"));
        }
        let mut covered: Vec<Vec<bool>> = data.recordings.iter().map(|r| vec![false; r.len()]).collect();
        for &i in train {
            let (r, start, end) = data.rows(i);
            covered[r][start..end].iter_mut().for_each(|c| *c = true);
        }
        let rows = data.recordings.iter().zip(&covered).flat_map(|(rec, mask)| {
            mask.iter()
                .enumerate()
                .filter(|(_, &c)| c)
                .map(move |(row, _)| rec.emg.row(row))
        });
        let input = ChannelStats::fit(rows, data.channels())?;
        let target = ChannelStats::fit(train.iter().map(|&i| data.target(i)), data.angle_count)?;
        Ok(Normalization { input, target })
    }

    pub fn identity(channels: usize, angles: usize) -> Self {
        Normalization {
            input: ChannelStats::identity(channels),
            target: ChannelStats::identity(angles),
        }
    }
}

/// A subset of a dataset, normalized on the fly, usable for training.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    data: &'a Dataset,
    indices: Vec<usize>,
    domains: Option<Vec<usize>>,
    norm: Normalization,
}

impl<'a> DatasetView<'a> {
    pub fn new(
        data: &'a Dataset,
        indices: Vec<usize>,
        domains: Option<Vec<usize>>,
        norm: Normalization,
    ) -> Result<Self> {
        if let Some(d) = &domains {
            if d.len() != indices.len() {
                return Err(Error::ShapeMismatch {
                    op: "view domain labels",
                    lhs: (indices.len(), 1),
                    rhs: (d.len(), 1),
                });
            }
        }
        if norm.input.width() != data.channels() || norm.target.width() != data.angle_count {
            return Err(Error::ShapeMismatch {
                op: "view normalization",
                lhs: (data.channels(), data.angle_count),
                rhs: (norm.input.width(), norm.target.width()),
            });
        }
        Ok(DatasetView {
            data,
            indices,
            domains,
            norm,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }
}

impl BatchSource for DatasetView<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn batch(&self, picks: &[usize]) -> Result<Batch> {
        let (steps, channels, b) = (self.data.window_len, self.data.channels(), picks.len());
        let mut inputs = Matrix::zeros(steps * b, channels);
        let mut targets = Matrix::zeros(b, self.data.angle_count);
        for (col, &p) in picks.iter().enumerate() {
            let i = self.indices[p];
            let window = self.data.window(i);
            for t in 0..steps {
                let dst = inputs.row_mut(t * b + col);
                dst.copy_from_slice(&window[t * channels..(t + 1) * channels]);
                self.norm.input.apply(dst);
            }
            let dst = targets.row_mut(col);
            dst.copy_from_slice(self.data.target(i));
            self.norm.target.apply(dst);
        }
        Ok(Batch {
            inputs: SeqBatch::new(steps, b, inputs)?,
            targets,
            domains: self.domains.as_ref().map(|d| picks.iter().map(|&p| d[p]).collect()),
        })
    }

    fn to_original_units(&self, angles: &mut Matrix) {
        self.norm.target.invert_matrix(angles);
    }
}

//! Recurrent cells (vanilla RNN, GRU, SRU) with forward passes over batches
//! of sequences and exact backpropagation through time.
//!
//! Weights follow the column-vector convention `W x`: an input weight is
//! `hidden x input`, a recurrent weight `hidden x hidden` and a bias a
//! `1 x hidden` row. Every input-side product for all timesteps is computed
//! in one pass before the sequential scan; only the hidden-to-hidden products
//! of the vanilla and GRU cells stay inside the loop.

mod gru;
mod sru;
mod vanilla;

use alloc::vec::Vec;

pub use gru::{gru_backward, gru_forward, GruParams, GruTrace};
pub use sru::{sru_backward, sru_forward, SruParams, SruTrace};
pub use vanilla::{vanilla_backward, vanilla_forward, VanillaParams, VanillaTrace};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, ParamSet, SeededRng};

/// A batch of equally long sequences stored step-major: rows
/// `t * batch .. (t + 1) * batch` hold timestep `t` of every sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBatch {
    steps: usize,
    batch: usize,
    data: Matrix,
}

impl SeqBatch {
    pub fn new(steps: usize, batch: usize, data: Matrix) -> Result<Self> {
        if data.rows() != steps * batch {
            return Err(Error::ShapeMismatch {
                op: "SeqBatch::new",
                lhs: (steps, batch),
                rhs: data.shape(),
            });
        }
        Ok(SeqBatch { steps, batch, data })
    }

    pub fn zeros(steps: usize, batch: usize, width: usize) -> Self {
        SeqBatch {
            steps,
            batch,
            data: Matrix::zeros(steps * batch, width),
        }
    }

    /// One sequence whose rows are timesteps.
    pub fn single(x: &Matrix) -> Self {
        SeqBatch {
            steps: x.rows(),
            batch: 1,
            data: x.clone(),
        }
    }

    /// Interleaves `steps x width` sequences into one batch.
    pub fn from_sequences(seqs: &[&Matrix]) -> Result<Self> {
        let first = seqs.first().ok_or(Error::EmptyInput("sequence batch"))?;
        let (steps, width) = first.shape();
        let batch = seqs.len();
        let mut data = Matrix::zeros(steps * batch, width);
        for (b, s) in seqs.iter().enumerate() {
            if s.shape() != (steps, width) {
                return Err(Error::ShapeMismatch {
                    op: "SeqBatch::from_sequences",
                    lhs: (steps, width),
                    rhs: s.shape(),
                });
            }
            for t in 0..steps {
                data.row_mut(t * batch + b).copy_from_slice(s.row(t));
            }
        }
        Ok(SeqBatch { steps, batch, data })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn width(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.data
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }

    /// Timestep `t` of every sequence, `batch x width` contiguous values.
    pub fn step(&self, t: usize) -> &[f64] {
        self.data.rows_slice(t * self.batch, (t + 1) * self.batch)
    }

    pub fn step_mut(&mut self, t: usize) -> &mut [f64] {
        self.data.rows_slice_mut(t * self.batch, (t + 1) * self.batch)
    }

    pub fn step_matrix(&self, t: usize) -> Matrix {
        self.data.slice_rows(t * self.batch, (t + 1) * self.batch)
    }

    /// Sequence `b` as a `steps x width` matrix.
    pub fn sequence(&self, b: usize) -> Matrix {
        let rows: Vec<&[f64]> = (0..self.steps).map(|t| self.data.row(t * self.batch + b)).collect();
        Matrix::from_rows(&rows).expect("rows share width")
    }

    pub fn last_step(&self) -> Matrix {
        self.step_matrix(self.steps - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellKind {
    Vanilla,
    Gru,
    Sru,
}

impl CellKind {
    pub fn name(self) -> &'static str {
        match self {
            CellKind::Vanilla => "vanilla",
            CellKind::Gru => "gru",
            CellKind::Sru => "sru",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vanilla" | "rnn" => Some(CellKind::Vanilla),
            "gru" => Some(CellKind::Gru),
            "sru" => Some(CellKind::Sru),
            _ => None,
        }
    }
}

/// Parameters of one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Vanilla(VanillaParams),
    Gru(GruParams),
    Sru(SruParams),
}

#[derive(Debug, Clone)]
pub enum CellTrace {
    Vanilla(VanillaTrace),
    Gru(GruTrace),
    Sru(SruTrace),
}

/// Result of a backward pass through one cell.
#[derive(Debug, Clone)]
pub struct CellBackward<G> {
    pub grads: G,
    pub input_grad: SeqBatch,
    /// Gradient with respect to the initial hidden (or cell) state.
    pub init_grad: Matrix,
}

impl CellParams {
    /// Fresh layer; vanilla cells project back to `hidden` so layers stack.
    pub fn init(kind: CellKind, input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        match kind {
            CellKind::Vanilla => CellParams::Vanilla(VanillaParams::init(input, hidden, hidden, rng)),
            CellKind::Gru => CellParams::Gru(GruParams::init(input, hidden, rng)),
            CellKind::Sru => CellParams::Sru(SruParams::init(input, hidden, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            CellParams::Vanilla(_) => CellKind::Vanilla,
            CellParams::Gru(_) => CellKind::Gru,
            CellParams::Sru(_) => CellKind::Sru,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            CellParams::Vanilla(p) => p.input_size(),
            CellParams::Gru(p) => p.input_size(),
            CellParams::Sru(p) => p.input_size(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            CellParams::Vanilla(p) => p.hidden_size(),
            CellParams::Gru(p) => p.hidden_size(),
            CellParams::Sru(p) => p.hidden_size(),
        }
    }

    pub fn output_size(&self) -> usize {
        match self {
            CellParams::Vanilla(p) => p.output_size(),
            CellParams::Gru(p) => p.hidden_size(),
            CellParams::Sru(p) => p.hidden_size(),
        }
    }

    /// Runs the layer from a zero initial state.
    pub fn forward(&self, x: &SeqBatch) -> Result<(SeqBatch, CellTrace)> {
        let init = Matrix::zeros(x.batch(), self.hidden_size());
        self.forward_from(x, &init)
    }

    pub fn forward_from(&self, x: &SeqBatch, init: &Matrix) -> Result<(SeqBatch, CellTrace)> {
        Ok(match self {
            CellParams::Vanilla(p) => {
                let (y, t) = vanilla_forward(p, x, init)?;
                (y, CellTrace::Vanilla(t))
            }
            CellParams::Gru(p) => {
                let (y, t) = gru_forward(p, x, init)?;
                (y, CellTrace::Gru(t))
            }
            CellParams::Sru(p) => {
                let (y, t) = sru_forward(p, x, init)?;
                (y, CellTrace::Sru(t))
            }
        })
    }

    pub fn backward(&self, trace: &CellTrace, upstream: &SeqBatch) -> Result<CellBackward<CellParams>> {
        fn wrap<G>(b: CellBackward<G>, f: impl FnOnce(G) -> CellParams) -> CellBackward<CellParams> {
            CellBackward {
                grads: f(b.grads),
                input_grad: b.input_grad,
                init_grad: b.init_grad,
            }
        }
        match (self, trace) {
            (CellParams::Vanilla(p), CellTrace::Vanilla(t)) => {
                Ok(wrap(vanilla_backward(p, t, upstream)?, CellParams::Vanilla))
            }
            (CellParams::Gru(p), CellTrace::Gru(t)) => Ok(wrap(gru_backward(p, t, upstream)?, CellParams::Gru)),
            (CellParams::Sru(p), CellTrace::Sru(t)) => Ok(wrap(sru_backward(p, t, upstream)?, CellParams::Sru)),
            _ => Err(Error::TraceMismatch("cell kind")),
        }
    }
}

impl ParamSet for CellParams {
    fn tensors(&self) -> Vec<&Matrix> {
        match self {
            CellParams::Vanilla(p) => p.tensors(),
            CellParams::Gru(p) => p.tensors(),
            CellParams::Sru(p) => p.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            CellParams::Vanilla(p) => p.tensors_mut(),
            CellParams::Gru(p) => p.tensors_mut(),
            CellParams::Sru(p) => p.tensors_mut(),
        }
    }
}

pub(crate) fn check_input(x: &SeqBatch, input: usize, init: &Matrix, state: usize) -> Result<()> {
    if x.width() != input {
        return Err(Error::ShapeMismatch {
            op: "cell input",
            lhs: (x.steps() * x.batch(), input),
            rhs: x.matrix().shape(),
        });
    }
    if init.shape() != (x.batch(), state) {
        return Err(Error::ShapeMismatch {
            op: "cell initial state",
            lhs: (x.batch(), state),
            rhs: init.shape(),
        });
    }
    if x.steps() == 0 {
        return Err(Error::EmptyInput("sequence"));
    }
    Ok(())
}

pub(crate) fn check_upstream(upstream: &SeqBatch, steps: usize, batch: usize, width: usize) -> Result<()> {
    if upstream.steps() != steps || upstream.batch() != batch || upstream.width() != width {
        return Err(Error::TraceMismatch("upstream gradient shape"));
    }
    Ok(())
}

/// `x · wᵀ + b` for every row of `x`.
pub(crate) fn affine(x: &Matrix, w: &Matrix, b: Option<&Matrix>) -> Result<Matrix> {
    let mut out = x.matmul_transb(w)?;
    if let Some(b) = b {
        out.add_row_broadcast(b)?;
    }
    Ok(out)
}

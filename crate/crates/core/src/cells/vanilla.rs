use alloc::vec;
use alloc::vec::Vec;

use super::{affine, check_input, check_upstream, CellBackward, SeqBatch};
use crate::error::{Error, Result};
use crate::numerics::{
    gemm_nn, gemm_nt, gemm_tn, init_params, init_params_with_fan_in, Init, Matrix, ParamSet, SeededRng,
};

/// Elman cell: `h_t = tanh(W_h x_t + U_h h_{t-1} + b_h)`, `y_t = W_y h_t + b_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct VanillaParams {
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
    pub w_y: Matrix,
    pub b_y: Matrix,
}

impl VanillaParams {
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut SeededRng) -> Self {
        VanillaParams {
            w_h: init_params(hidden, input, Init::UniformScaled, rng),
            u_h: init_params(hidden, hidden, Init::UniformScaled, rng),
            b_h: init_params_with_fan_in(1, hidden, hidden, Init::UniformScaled, rng),
            w_y: init_params(output, hidden, Init::UniformScaled, rng),
            b_y: init_params_with_fan_in(1, output, hidden, Init::UniformScaled, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        VanillaParams {
            w_h: Matrix::zeros(hidden, input),
            u_h: Matrix::zeros(hidden, hidden),
            b_h: Matrix::zeros(1, hidden),
            w_y: Matrix::zeros(output, hidden),
            b_y: Matrix::zeros(1, output),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_h.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.rows()
    }

    pub fn output_size(&self) -> usize {
        self.w_y.rows()
    }

    fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        let ok = self.u_h.shape() == (h, h)
            && self.b_h.shape() == (1, h)
            && self.w_y.cols() == h
            && self.b_y.shape() == (1, self.output_size());
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                op: "vanilla params",
                lhs: self.w_h.shape(),
                rhs: self.u_h.shape(),
            })
        }
    }
}

impl ParamSet for VanillaParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![&self.w_h, &self.u_h, &self.b_h, &self.w_y, &self.b_y]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
            &mut self.w_y,
            &mut self.b_y,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct VanillaTrace {
    x: SeqBatch,
    /// Hidden states, `h_0` first: `(steps + 1) * batch` rows.
    hs: Matrix,
}

impl VanillaTrace {
    pub fn len(&self) -> usize {
        self.x.steps()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hidden states `h_1 .. h_T`.
    pub fn hidden(&self) -> SeqBatch {
        let b = self.x.batch();
        SeqBatch::new(self.x.steps(), b, self.hs.slice_rows(b, self.hs.rows())).expect("shape")
    }
}

pub fn vanilla_forward(p: &VanillaParams, x: &SeqBatch, h0: &Matrix) -> Result<(SeqBatch, VanillaTrace)> {
    p.validate()?;
    let (hidden, batch, steps) = (p.hidden_size(), x.batch(), x.steps());
    check_input(x, p.input_size(), h0, hidden)?;

    let pre = affine(x.matrix(), &p.w_h, Some(&p.b_h))?;
    let mut hs = Matrix::zeros((steps + 1) * batch, hidden);
    hs.rows_slice_mut(0, batch).copy_from_slice(h0.as_slice());
    let width = batch * hidden;
    for t in 0..steps {
        let (done, rest) = hs.as_mut_slice().split_at_mut((t + 1) * width);
        let prev = &done[t * width..];
        let cur = &mut rest[..width];
        cur.copy_from_slice(&pre.as_slice()[t * width..(t + 1) * width]);
        gemm_nt(batch, hidden, hidden, prev, p.u_h.as_slice(), cur);
        cur.iter_mut().for_each(|v| *v = libm::tanh(*v));
    }
    let h_all = hs.slice_rows(batch, hs.rows());
    let y = affine(&h_all, &p.w_y, Some(&p.b_y))?;
    let out = SeqBatch::new(steps, batch, y)?;
    Ok((out, VanillaTrace { x: x.clone(), hs }))
}

pub fn vanilla_backward(
    p: &VanillaParams,
    trace: &VanillaTrace,
    upstream: &SeqBatch,
) -> Result<CellBackward<VanillaParams>> {
    let (hidden, batch, steps) = (p.hidden_size(), trace.x.batch(), trace.x.steps());
    if trace.hs.cols() != hidden || trace.x.width() != p.input_size() {
        return Err(Error::TraceMismatch("vanilla"));
    }
    check_upstream(upstream, steps, batch, p.output_size())?;

    let mut g = VanillaParams::zeros(p.input_size(), hidden, p.output_size());
    let dy = upstream.matrix();
    let h_all = trace.hs.slice_rows(batch, trace.hs.rows());
    g.w_y.add_matmul_transa(dy, &h_all)?;
    g.b_y = dy.sum_rows();
    // dL/dh_t from the output projection
    let dh_out = dy.matmul(&p.w_y)?;

    let width = batch * hidden;
    let mut da_all = Matrix::zeros(steps * batch, hidden);
    let mut carry = vec![0.0; width];
    for t in (0..steps).rev() {
        let h = &trace.hs.as_slice()[(t + 1) * width..(t + 2) * width];
        let h_prev = &trace.hs.as_slice()[t * width..(t + 1) * width];
        let da = &mut da_all.as_mut_slice()[t * width..(t + 1) * width];
        for i in 0..width {
            let dh = dh_out.as_slice()[t * width + i] + carry[i];
            da[i] = dh * (1.0 - h[i] * h[i]);
        }
        gemm_tn(batch, hidden, hidden, da, h_prev, g.u_h.as_mut_slice());
        carry.iter_mut().for_each(|v| *v = 0.0);
        gemm_nn(batch, hidden, hidden, da, p.u_h.as_slice(), &mut carry);
    }
    g.w_h.add_matmul_transa(&da_all, trace.x.matrix())?;
    g.b_h = da_all.sum_rows();
    let dx = da_all.matmul(&p.w_h)?;
    Ok(CellBackward {
        grads: g,
        input_grad: SeqBatch::new(steps, batch, dx)?,
        init_grad: Matrix::from_vec(batch, hidden, carry)?,
    })
}

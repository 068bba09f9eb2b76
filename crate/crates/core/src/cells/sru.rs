use alloc::vec;
use alloc::vec::Vec;

use super::{affine, check_input, check_upstream, CellBackward, SeqBatch};
use crate::error::{Error, Result};
use crate::numerics::{init_params, init_params_with_fan_in, Init, Matrix, ParamSet, SeededRng};

/// Simple recurrent unit.
///
/// ```text
/// x̂_t = W x_t
/// f_t = sigmoid(W_f x_t + b_f)
/// r_t = sigmoid(W_r x_t + b_r)
/// c_t = f_t * c_{t-1} + (1 - f_t) * x̂_t
/// h_t = r_t * tanh(c_t) + (1 - r_t) * x_t
/// ```
///
/// The gates read only `x_t`, so all three products are computed for every
/// timestep up front and the recurrence is a cheap elementwise scan. When the
/// input width differs from the hidden width the highway term uses the
/// learned projection `W_p x_t` instead of `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SruParams {
    pub w: Matrix,
    pub w_f: Matrix,
    pub b_f: Matrix,
    pub w_r: Matrix,
    pub b_r: Matrix,
    pub w_p: Option<Matrix>,
}

impl SruParams {
    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let w = init_params(hidden, input, Init::UniformScaled, rng);
        let w_f = init_params(hidden, input, Init::UniformScaled, rng);
        let b_f = init_params_with_fan_in(1, hidden, input, Init::UniformScaled, rng);
        let w_r = init_params(hidden, input, Init::UniformScaled, rng);
        let b_r = init_params_with_fan_in(1, hidden, input, Init::UniformScaled, rng);
        let w_p = (input != hidden).then(|| init_params(hidden, input, Init::UniformScaled, rng));
        SruParams {
            w,
            w_f,
            b_f,
            w_r,
            b_r,
            w_p,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        SruParams {
            w: Matrix::zeros(hidden, input),
            w_f: Matrix::zeros(hidden, input),
            b_f: Matrix::zeros(1, hidden),
            w_r: Matrix::zeros(hidden, input),
            b_r: Matrix::zeros(1, hidden),
            w_p: (input != hidden).then(|| Matrix::zeros(hidden, input)),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w.rows()
    }

    fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_size(), self.input_size());
        for w in [&self.w_f, &self.w_r] {
            if w.shape() != (h, i) {
                return Err(Error::ShapeMismatch {
                    op: "sru gate weight",
                    lhs: (h, i),
                    rhs: w.shape(),
                });
            }
        }
        for b in [&self.b_f, &self.b_r] {
            if b.shape() != (1, h) {
                return Err(Error::ShapeMismatch {
                    op: "sru bias",
                    lhs: (1, h),
                    rhs: b.shape(),
                });
            }
        }
        match &self.w_p {
            None if i != h => Err(Error::ShapeMismatch {
                op: "sru highway needs a projection",
                lhs: (h, i),
                rhs: (h, h),
            }),
            Some(p) if p.shape() != (h, i) => Err(Error::ShapeMismatch {
                op: "sru highway projection",
                lhs: (h, i),
                rhs: p.shape(),
            }),
            _ => Ok(()),
        }
    }
}

impl ParamSet for SruParams {
    fn tensors(&self) -> Vec<&Matrix> {
        let mut v = vec![&self.w, &self.w_f, &self.b_f, &self.w_r, &self.b_r];
        if let Some(p) = &self.w_p {
            v.push(p);
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.w, &mut self.w_f, &mut self.b_f, &mut self.w_r, &mut self.b_r];
        if let Some(p) = &mut self.w_p {
            v.push(p);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct SruTrace {
    x: SeqBatch,
    x_hat: Matrix,
    f: Matrix,
    r: Matrix,
    highway: Matrix,
    /// `c_0 .. c_T`, `(steps + 1) * batch` rows.
    cs: Matrix,
    /// tanh of `c_1 .. c_T`, reused by the backward pass.
    gs: Matrix,
}

impl SruTrace {
    pub fn len(&self) -> usize {
        self.x.steps()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell states `c_0 .. c_T` as a matrix with `(steps + 1) * batch` rows.
    pub fn cell_states(&self) -> &Matrix {
        &self.cs
    }

    pub fn x_hat(&self) -> &Matrix {
        &self.x_hat
    }
}

pub fn sru_forward(p: &SruParams, x: &SeqBatch, c0: &Matrix) -> Result<(SeqBatch, SruTrace)> {
    p.validate()?;
    let (hidden, batch, steps) = (p.hidden_size(), x.batch(), x.steps());
    check_input(x, p.input_size(), c0, hidden)?;
    let xm = x.matrix();

    // Every matrix product happens here, for all timesteps at once.
    let x_hat = affine(xm, &p.w, None)?;
    let f = affine(xm, &p.w_f, Some(&p.b_f))?.map(crate::numerics::sigmoid_scalar);
    let r = affine(xm, &p.w_r, Some(&p.b_r))?.map(crate::numerics::sigmoid_scalar);
    let highway = match &p.w_p {
        Some(w_p) => affine(xm, w_p, None)?,
        None => xm.clone(),
    };

    let width = batch * hidden;
    let mut cs = Matrix::zeros((steps + 1) * batch, hidden);
    cs.rows_slice_mut(0, batch).copy_from_slice(c0.as_slice());
    let mut h = Matrix::zeros(steps * batch, hidden);
    let mut gs = Matrix::zeros(steps * batch, hidden);
    for t in 0..steps {
        let span = t * width..(t + 1) * width;
        let (done, rest) = cs.as_mut_slice().split_at_mut((t + 1) * width);
        let c_prev = &done[t * width..];
        let c_cur = &mut rest[..width];
        let (ft, rt) = (&f.as_slice()[span.clone()], &r.as_slice()[span.clone()]);
        let (xh, hw) = (&x_hat.as_slice()[span.clone()], &highway.as_slice()[span.clone()]);
        let ht = &mut h.as_mut_slice()[span.clone()];
        let gt = &mut gs.as_mut_slice()[span];
        for i in 0..width {
            c_cur[i] = ft[i] * c_prev[i] + (1.0 - ft[i]) * xh[i];
            gt[i] = libm::tanh(c_cur[i]);
            ht[i] = rt[i] * gt[i] + (1.0 - rt[i]) * hw[i];
        }
    }
    Ok((
        SeqBatch::new(steps, batch, h)?,
        SruTrace {
            x: x.clone(),
            x_hat,
            f,
            r,
            highway,
            cs,
            gs,
        },
    ))
}

pub fn sru_backward(p: &SruParams, trace: &SruTrace, upstream: &SeqBatch) -> Result<CellBackward<SruParams>> {
    let (hidden, batch, steps) = (p.hidden_size(), trace.x.batch(), trace.x.steps());
    if trace.cs.cols() != hidden || trace.x.width() != p.input_size() || trace.highway.cols() != hidden {
        return Err(Error::TraceMismatch("sru"));
    }
    check_upstream(upstream, steps, batch, hidden)?;

    let width = batch * hidden;
    let mut dxh_all = Matrix::zeros(steps * batch, hidden);
    let mut daf_all = Matrix::zeros(steps * batch, hidden);
    let mut dar_all = Matrix::zeros(steps * batch, hidden);
    let mut dhw_all = Matrix::zeros(steps * batch, hidden);
    let mut carry = vec![0.0; width];

    for t in (0..steps).rev() {
        let span = t * width..(t + 1) * width;
        let c_prev = &trace.cs.as_slice()[span.clone()];
        let gt = &trace.gs.as_slice()[span.clone()];
        let ft = &trace.f.as_slice()[span.clone()];
        let rt = &trace.r.as_slice()[span.clone()];
        let xh = &trace.x_hat.as_slice()[span.clone()];
        let hw = &trace.highway.as_slice()[span.clone()];
        let up = upstream.step(t);
        let dxh = &mut dxh_all.as_mut_slice()[span.clone()];
        let daf = &mut daf_all.as_mut_slice()[span.clone()];
        let dar = &mut dar_all.as_mut_slice()[span.clone()];
        let dhw = &mut dhw_all.as_mut_slice()[span];
        for i in 0..width {
            let g = gt[i];
            let dh = up[i];
            let dr = dh * (g - hw[i]);
            dhw[i] = dh * (1.0 - rt[i]);
            let dc = dh * rt[i] * (1.0 - g * g) + carry[i];
            let df = dc * (c_prev[i] - xh[i]);
            dxh[i] = dc * (1.0 - ft[i]);
            carry[i] = dc * ft[i];
            daf[i] = df * ft[i] * (1.0 - ft[i]);
            dar[i] = dr * rt[i] * (1.0 - rt[i]);
        }
    }

    let x = trace.x.matrix();
    let mut g = SruParams::zeros(p.input_size(), hidden);
    g.w.add_matmul_transa(&dxh_all, x)?;
    g.w_f.add_matmul_transa(&daf_all, x)?;
    g.w_r.add_matmul_transa(&dar_all, x)?;
    g.b_f = daf_all.sum_rows();
    g.b_r = dar_all.sum_rows();
    let mut dx = dxh_all.matmul(&p.w)?;
    dx.add_assign(&daf_all.matmul(&p.w_f)?)?;
    dx.add_assign(&dar_all.matmul(&p.w_r)?)?;
    match (&p.w_p, &mut g.w_p) {
        (Some(w_p), Some(gw_p)) => {
            gw_p.add_matmul_transa(&dhw_all, x)?;
            dx.add_assign(&dhw_all.matmul(w_p)?)?;
        }
        _ => dx.add_assign(&dhw_all)?,
    }
    Ok(CellBackward {
        grads: g,
        input_grad: SeqBatch::new(steps, batch, dx)?,
        init_grad: Matrix::from_vec(batch, hidden, carry)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_pass_half_the_input() {
        let p = SruParams::zeros(1, 1);
        let x = SeqBatch::single(&Matrix::filled(1, 1, 2.0));
        let (h, _) = sru_forward(&p, &x, &Matrix::zeros(1, 1)).unwrap();
        let expected = 0.5 * libm::tanh(0.0) + 0.5 * 2.0;
        assert!((h.matrix()[(0, 0)] - expected).abs() < 1e-12);
        assert!((h.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_params_decay_cell_state() {
        let p = SruParams::zeros(1, 1);
        let x = SeqBatch::single(&Matrix::zeros(1, 1));
        let (h, trace) = sru_forward(&p, &x, &Matrix::filled(1, 1, 1.0)).unwrap();
        assert!((trace.cell_states()[(1, 0)] - 0.5).abs() < 1e-15);
        assert!((h.matrix()[(0, 0)] - 0.231_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn mismatched_width_without_projection_is_rejected() {
        let mut p = SruParams::zeros(3, 4);
        p.w_p = None;
        let x = SeqBatch::single(&Matrix::zeros(2, 3));
        assert!(sru_forward(&p, &x, &Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn projection_only_when_widths_differ() {
        let mut rng = SeededRng::new(1);
        assert!(SruParams::init(8, 16, &mut rng).w_p.is_some());
        assert!(SruParams::init(16, 16, &mut rng).w_p.is_none());
    }

    #[test]
    fn forget_blend_is_bounded() {
        let mut rng = SeededRng::new(9);
        let p = SruParams::init(4, 4, &mut rng);
        let data = (0..30 * 4).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        let x = SeqBatch::single(&Matrix::from_vec(30, 4, data).unwrap());
        let c0 = Matrix::row_vector(&[0.5, -0.5, 2.0, 0.0]);
        let (_, trace) = sru_forward(&p, &x, &c0).unwrap();
        let cs = trace.cell_states();
        for t in 0..30 {
            for j in 0..4 {
                let (prev, cur, xh) = (cs[(t, j)], cs[(t + 1, j)], trace.x_hat()[(t, j)]);
                assert!(cur >= prev.min(xh) - 1e-15 && cur <= prev.max(xh) + 1e-15);
            }
        }
    }
}

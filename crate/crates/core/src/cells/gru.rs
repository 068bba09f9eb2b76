use alloc::vec;
use alloc::vec::Vec;

use super::{affine, check_input, check_upstream, CellBackward, SeqBatch};
use crate::error::{Error, Result};
use crate::numerics::{
    gemm_nn, gemm_nt, gemm_tn, init_params, init_params_with_fan_in, sigmoid_scalar, Init, Matrix, ParamSet, SeededRng,
};

/// Gated recurrent unit.
///
/// ```text
/// z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
/// r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
/// h_t = (1 - z_t) * h_{t-1} + z_t * tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Matrix,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Matrix,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Matrix,
}

impl GruParams {
    pub fn init(input: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let mut w = || init_params(hidden, input, Init::UniformScaled, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || init_params(hidden, hidden, Init::UniformScaled, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        let mut b = || init_params_with_fan_in(1, hidden, hidden, Init::UniformScaled, rng);
        let (b_z, b_r, b_h) = (b(), b(), b());
        GruParams {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            w_z: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            b_z: Matrix::zeros(1, hidden),
            w_r: Matrix::zeros(hidden, input),
            u_r: Matrix::zeros(hidden, hidden),
            b_r: Matrix::zeros(1, hidden),
            w_h: Matrix::zeros(hidden, input),
            u_h: Matrix::zeros(hidden, hidden),
            b_h: Matrix::zeros(1, hidden),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_z.rows()
    }

    fn validate(&self) -> Result<()> {
        let (h, i) = (self.hidden_size(), self.input_size());
        for w in [&self.w_z, &self.w_r, &self.w_h] {
            if w.shape() != (h, i) {
                return Err(Error::ShapeMismatch {
                    op: "gru input weight",
                    lhs: (h, i),
                    rhs: w.shape(),
                });
            }
        }
        for u in [&self.u_z, &self.u_r, &self.u_h] {
            if u.shape() != (h, h) {
                return Err(Error::ShapeMismatch {
                    op: "gru recurrent weight",
                    lhs: (h, h),
                    rhs: u.shape(),
                });
            }
        }
        for b in [&self.b_z, &self.b_r, &self.b_h] {
            if b.shape() != (1, h) {
                return Err(Error::ShapeMismatch {
                    op: "gru bias",
                    lhs: (1, h),
                    rhs: b.shape(),
                });
            }
        }
        Ok(())
    }
}

impl ParamSet for GruParams {
    fn tensors(&self) -> Vec<&Matrix> {
        vec![
            &self.w_z, &self.u_z, &self.b_z, &self.w_r, &self.u_r, &self.b_r, &self.w_h, &self.u_h, &self.b_h,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_h,
        ]
    }
}

#[derive(Debug, Clone)]
pub struct GruTrace {
    x: SeqBatch,
    /// `h_0 .. h_T`, `(steps + 1) * batch` rows.
    hs: Matrix,
    z: Matrix,
    r: Matrix,
    /// tanh candidate states.
    n: Matrix,
}

impl GruTrace {
    pub fn len(&self) -> usize {
        self.x.steps()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn gru_forward(p: &GruParams, x: &SeqBatch, h0: &Matrix) -> Result<(SeqBatch, GruTrace)> {
    p.validate()?;
    let (hidden, batch, steps) = (p.hidden_size(), x.batch(), x.steps());
    check_input(x, p.input_size(), h0, hidden)?;

    let pre_z = affine(x.matrix(), &p.w_z, Some(&p.b_z))?;
    let pre_r = affine(x.matrix(), &p.w_r, Some(&p.b_r))?;
    let pre_n = affine(x.matrix(), &p.w_h, Some(&p.b_h))?;

    let width = batch * hidden;
    let mut hs = Matrix::zeros((steps + 1) * batch, hidden);
    hs.rows_slice_mut(0, batch).copy_from_slice(h0.as_slice());
    let mut z = Matrix::zeros(steps * batch, hidden);
    let mut r = Matrix::zeros(steps * batch, hidden);
    let mut n = Matrix::zeros(steps * batch, hidden);
    let mut rh = vec![0.0; width];

    for t in 0..steps {
        let span = t * width..(t + 1) * width;
        let (done, rest) = hs.as_mut_slice().split_at_mut((t + 1) * width);
        let h_prev = &done[t * width..];
        let h_cur = &mut rest[..width];

        let zt = &mut z.as_mut_slice()[span.clone()];
        zt.copy_from_slice(&pre_z.as_slice()[span.clone()]);
        gemm_nt(batch, hidden, hidden, h_prev, p.u_z.as_slice(), zt);
        zt.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));

        let rt = &mut r.as_mut_slice()[span.clone()];
        rt.copy_from_slice(&pre_r.as_slice()[span.clone()]);
        gemm_nt(batch, hidden, hidden, h_prev, p.u_r.as_slice(), rt);
        rt.iter_mut().for_each(|v| *v = sigmoid_scalar(*v));

        for i in 0..width {
            rh[i] = rt[i] * h_prev[i];
        }
        let nt = &mut n.as_mut_slice()[span.clone()];
        nt.copy_from_slice(&pre_n.as_slice()[span]);
        gemm_nt(batch, hidden, hidden, &rh, p.u_h.as_slice(), nt);
        nt.iter_mut().for_each(|v| *v = libm::tanh(*v));

        for i in 0..width {
            h_cur[i] = (1.0 - zt[i]) * h_prev[i] + zt[i] * nt[i];
        }
    }
    let out = SeqBatch::new(steps, batch, hs.slice_rows(batch, hs.rows()))?;
    Ok((
        out,
        GruTrace {
            x: x.clone(),
            hs,
            z,
            r,
            n,
        },
    ))
}

pub fn gru_backward(p: &GruParams, trace: &GruTrace, upstream: &SeqBatch) -> Result<CellBackward<GruParams>> {
    let (hidden, batch, steps) = (p.hidden_size(), trace.x.batch(), trace.x.steps());
    if trace.hs.cols() != hidden || trace.x.width() != p.input_size() {
        return Err(Error::TraceMismatch("gru"));
    }
    check_upstream(upstream, steps, batch, hidden)?;

    let mut g = GruParams::zeros(p.input_size(), hidden);
    let width = batch * hidden;
    let mut daz_all = Matrix::zeros(steps * batch, hidden);
    let mut dar_all = Matrix::zeros(steps * batch, hidden);
    let mut dan_all = Matrix::zeros(steps * batch, hidden);
    let mut carry = vec![0.0; width];
    let mut dh_prev = vec![0.0; width];
    let mut rh = vec![0.0; width];
    let mut drh = vec![0.0; width];

    for t in (0..steps).rev() {
        let span = t * width..(t + 1) * width;
        let h_prev = &trace.hs.as_slice()[span.clone()];
        let zt = &trace.z.as_slice()[span.clone()];
        let rt = &trace.r.as_slice()[span.clone()];
        let nt = &trace.n.as_slice()[span.clone()];
        let up = upstream.step(t);
        let daz = &mut daz_all.as_mut_slice()[span.clone()];
        let dan = &mut dan_all.as_mut_slice()[span.clone()];

        for i in 0..width {
            let dh = up[i] + carry[i];
            let dn = dh * zt[i];
            let dz = dh * (nt[i] - h_prev[i]);
            dh_prev[i] = dh * (1.0 - zt[i]);
            dan[i] = dn * (1.0 - nt[i] * nt[i]);
            daz[i] = dz * zt[i] * (1.0 - zt[i]);
            rh[i] = rt[i] * h_prev[i];
        }
        gemm_tn(batch, hidden, hidden, dan, &rh, g.u_h.as_mut_slice());
        drh.iter_mut().for_each(|v| *v = 0.0);
        gemm_nn(batch, hidden, hidden, dan, p.u_h.as_slice(), &mut drh);

        let dar = &mut dar_all.as_mut_slice()[span];
        for i in 0..width {
            let dr = drh[i] * h_prev[i];
            dh_prev[i] += drh[i] * rt[i];
            dar[i] = dr * rt[i] * (1.0 - rt[i]);
        }
        gemm_tn(batch, hidden, hidden, daz, h_prev, g.u_z.as_mut_slice());
        gemm_tn(batch, hidden, hidden, dar, h_prev, g.u_r.as_mut_slice());
        gemm_nn(batch, hidden, hidden, daz, p.u_z.as_slice(), &mut dh_prev);
        gemm_nn(batch, hidden, hidden, dar, p.u_r.as_slice(), &mut dh_prev);
        carry.copy_from_slice(&dh_prev);
    }

    let x = trace.x.matrix();
    g.w_z.add_matmul_transa(&daz_all, x)?;
    g.w_r.add_matmul_transa(&dar_all, x)?;
    g.w_h.add_matmul_transa(&dan_all, x)?;
    g.b_z = daz_all.sum_rows();
    g.b_r = dar_all.sum_rows();
    g.b_h = dan_all.sum_rows();
    let mut dx = daz_all.matmul(&p.w_z)?;
    dx.add_assign(&dar_all.matmul(&p.w_r)?)?;
    dx.add_assign(&dan_all.matmul(&p.w_h)?)?;
    Ok(CellBackward {
        grads: g,
        input_grad: SeqBatch::new(steps, batch, dx)?,
        init_grad: Matrix::from_vec(batch, hidden, carry)?,
    })
}

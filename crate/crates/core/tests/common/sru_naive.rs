//! Direct per-timestep evaluation of the SRU equations, the reference for
//! the batched implementation.

use myograsp_core::cells::{SeqBatch, SruParams};
use myograsp_core::numerics::Matrix;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `W v` for a `rows x cols` weight and a length-`cols` vector.
fn matvec(w: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|i| w.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

/// Per-sequence, per-step loop; returns `h` in the batched layout.
pub fn naive(p: &SruParams, x: &SeqBatch, c0: &Matrix) -> Matrix {
    let (steps, batch, hidden) = (x.steps(), x.batch(), p.w.rows());
    let mut out = Matrix::zeros(steps * batch, hidden);
    for b in 0..batch {
        let mut c = c0.row(b).to_vec();
        for t in 0..steps {
            let xt = &x.step(t)[b * x.width()..(b + 1) * x.width()];
            let x_hat = matvec(&p.w, xt);
            let f: Vec<f64> = matvec(&p.w_f, xt)
                .iter()
                .zip(p.b_f.row(0))
                .map(|(a, b)| sigmoid(a + b))
                .collect();
            let r: Vec<f64> = matvec(&p.w_r, xt)
                .iter()
                .zip(p.b_r.row(0))
                .map(|(a, b)| sigmoid(a + b))
                .collect();
            let highway = match &p.w_p {
                Some(w_p) => matvec(w_p, xt),
                None => xt.to_vec(),
            };
            for j in 0..hidden {
                c[j] = f[j] * c[j] + (1.0 - f[j]) * x_hat[j];
                out[(t * batch + b, j)] = r[j] * c[j].tanh() + (1.0 - r[j]) * highway[j];
            }
        }
    }
    out
}

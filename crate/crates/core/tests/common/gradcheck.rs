//! Finite-difference check of whole-network gradients, shared by the core
//! tests and the acceptance suite.

use myograsp_core::cells::{CellKind, SeqBatch};
use myograsp_core::network::{Network, NetworkConfig};
use myograsp_core::numerics::{Matrix, ParamSet, SeededRng};
use myograsp_core::training::{cross_entropy_batch, mse_loss_batch};

pub const STEP: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

/// Relative error; the floor keeps gradients near zero, where the finite
/// difference only resolves about 1e-11, from dominating.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub struct Problem {
    pub net: Network,
    pub x: SeqBatch,
    pub targets: Matrix,
    pub labels: Vec<usize>,
}

/// A small random network (with a 3-domain discriminator when `ada`) and
/// a random batch.
pub fn problem(kind: CellKind, ada: bool, seed: u64) -> Problem {
    let mut cfg = NetworkConfig::new(kind, 15);
    cfg.input_channels = 3;
    cfg.hidden_size = 4;
    cfg.predictor_hidden = 5;
    cfg.discriminator_hidden = 3;
    if ada {
        cfg = cfg.with_discriminator(3);
    }
    let mut rng = SeededRng::new(seed);
    let mut net = Network::new(cfg, &mut rng).unwrap();
    for t in net.params.tensors_mut() {
        t.scale_assign(1.5);
    }
    let (steps, batch) = (5, 3);
    let x = Matrix::from_vec(
        steps * batch,
        3,
        (0..steps * batch * 3).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let targets = Matrix::from_vec(batch, 15, (0..batch * 15).map(|_| rng.normal()).collect()).unwrap();
    Problem {
        net,
        x: SeqBatch::new(steps, batch, x).unwrap(),
        targets,
        labels: (0..batch).map(|_| rng.below(3)).collect(),
    }
}

/// (mse, cross-entropy) of the current parameters.
pub fn losses(p: &Problem) -> (f64, f64) {
    let out = p.net.forward(&p.x).unwrap();
    let mse = mse_loss_batch(&out.angles, &p.targets).unwrap().0;
    let ce = out
        .domain_logits
        .map_or(0.0, |l| cross_entropy_batch(&l, &p.labels).unwrap().0);
    (mse, ce)
}

/// Worst relative error between the analytic gradient the trainer uses and
/// its finite-difference reconstruction. Predictor tensors must match
/// d(mse), discriminator tensors d(ce), and recurrent tensors
/// d(mse) + lambda * d(ce), lambda being the reversal factor.
pub fn worst_error(p: &mut Problem) -> f64 {
    let out = p.net.forward(&p.x).unwrap();
    let (_, angle_grad) = mse_loss_batch(&out.angles, &p.targets).unwrap();
    let domain_grad = out
        .domain_logits
        .as_ref()
        .map(|l| cross_entropy_batch(l, &p.labels).unwrap().1);
    let grads = p.net.backward(&out.trace, &angle_grad, domain_grad.as_ref()).unwrap();
    let lambda = p.net.config.grl_lambda;
    let n_layer: usize = p.net.params.layers.iter().map(|l| l.tensors().len()).sum();
    let n_pred = p.net.params.predictor.tensors().len();

    let mut worst = 0.0f64;
    let n_tensors = p.net.params.tensors().len();
    for ti in 0..n_tensors {
        for k in 0..p.net.params.tensors()[ti].len() {
            let orig = p.net.params.tensors()[ti].as_slice()[k];
            p.net.params.tensors_mut()[ti].as_mut_slice()[k] = orig + STEP;
            let up = losses(p);
            p.net.params.tensors_mut()[ti].as_mut_slice()[k] = orig - STEP;
            let down = losses(p);
            p.net.params.tensors_mut()[ti].as_mut_slice()[k] = orig;
            let d_mse = (up.0 - down.0) / (2.0 * STEP);
            let d_ce = (up.1 - down.1) / (2.0 * STEP);
            let expected = if ti < n_layer {
                d_mse + lambda * d_ce
            } else if ti < n_layer + n_pred {
                d_mse
            } else {
                d_ce
            };
            let analytic = grads.tensors()[ti].as_slice()[k];
            worst = worst.max(rel_err(analytic, expected));
        }
    }
    worst
}

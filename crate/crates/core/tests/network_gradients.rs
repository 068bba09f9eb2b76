//! Whole-network gradients, with and without the adversarial head.

#[path = "common/gradcheck.rs"]
mod gradcheck;

use gradcheck::{problem, worst_error, TOL};
use myograsp_core::cells::CellKind;
use myograsp_core::numerics::ParamSet;
use myograsp_core::training::{batch_gradients, Batch};

const KINDS: [CellKind; 3] = [CellKind::Vanilla, CellKind::Gru, CellKind::Sru];

#[test]
fn predictor_only_networks() {
    for kind in KINDS {
        for seed in 0..10 {
            let worst = worst_error(&mut problem(kind, false, seed));
            assert!(worst < TOL, "{kind:?} seed {seed}: {worst:e}");
        }
    }
}

#[test]
fn adversarial_networks_with_full_reversal() {
    for kind in KINDS {
        for seed in 0..10 {
            let mut p = problem(kind, true, 50 + seed);
            assert_eq!(p.net.config.grl_lambda, -1.0);
            let worst = worst_error(&mut p);
            assert!(worst < TOL, "{kind:?} seed {seed}: {worst:e}");
        }
    }
}

#[test]
fn partial_reversal() {
    let mut p = problem(CellKind::Sru, true, 7);
    p.net.config.grl_lambda = -0.35;
    assert!(worst_error(&mut p) < TOL);
}

/// The joint gradient splits exactly into the predictor-only gradient plus
/// the reversed discriminator contribution.
#[test]
fn adversarial_gradient_decomposes_by_path() {
    for kind in KINDS {
        let p = problem(kind, true, 3);
        let batch = Batch {
            inputs: p.x.clone(),
            targets: p.targets.clone(),
            domains: Some(p.labels.clone()),
        };
        let (_, joint) = batch_gradients(&p.net, &batch, 1.0).unwrap();
        let (_, predictor_only) = batch_gradients(&p.net, &batch, 0.0).unwrap();
        let out = p.net.forward(&p.x).unwrap();
        let zero_angles = myograsp_core::Matrix::zeros(p.targets.rows(), p.targets.cols());
        let logits = out.domain_logits.as_ref().unwrap();
        let (_, dg) = myograsp_core::training::cross_entropy_batch(logits, &p.labels).unwrap();
        let domain_only = p.net.backward(&out.trace, &zero_angles, Some(&dg)).unwrap();
        for ((j, a), b) in joint
            .tensors()
            .iter()
            .zip(predictor_only.tensors())
            .zip(domain_only.tensors())
        {
            for k in 0..j.len() {
                let sum = a.as_slice()[k] + b.as_slice()[k];
                assert!((j.as_slice()[k] - sum).abs() <= 1e-10 * (1.0 + sum.abs()), "{kind:?}");
            }
        }
    }
}

//! Property tests over randomized inputs.

#[path = "common/splitcheck.rs"]
mod splitcheck;

use myograsp_core::datapipe::{align, window_ends, Butterworth, Normalization, RawStream, StreamKind};
use myograsp_core::metrics::{angle_ranges, nrmse, rmse};
use myograsp_core::numerics::{Matrix, SeededRng};
use myograsp_core::splits::{split, Protocol, Role};
use myograsp_core::synthgen::{covariance_distance, generate_session, SynthConfig};
use proptest::prelude::*;

proptest! {
    #[test]
    fn window_count_formula(n in 1usize..5000, window in 1usize..300, stride in 1usize..64) {
        match window_ends(n, window, stride) {
            Ok(ends) => {
                prop_assert!(n >= window);
                prop_assert_eq!(ends.len(), (n - window) / stride + 1);
                prop_assert_eq!(ends[0], window - 1);
                prop_assert!(*ends.last().unwrap() < n);
                prop_assert!(ends.windows(2).all(|w| w[1] - w[0] == stride));
            }
            Err(_) => prop_assert!(n < window),
        }
    }

    #[test]
    fn zero_phase_filter_is_linear(
        seed in any::<u64>(),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
        n in 30usize..400,
        cutoff in 1.0f64..40.0,
    ) {
        let mut rng = SeededRng::new(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.normal() * 50.0).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.normal() * 50.0).collect();
        let f = Butterworth::lowpass(4, cutoff, 200.0).unwrap();
        let mixed: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (f.filtfilt(&x), f.filtfilt(&y), f.filtfilt(&mixed));
        let scale = fm.iter().chain(&fx).chain(&fy).fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn aligned_pairs_respect_the_gap(seed in any::<u64>(), max_gap in 0.5f64..15.0, n in 5usize..200) {
        let mut rng = SeededRng::new(seed);
        let mut t = 0.0;
        let emg_ts: Vec<f64> = (0..n).map(|_| { t += rng.uniform_range(2.0, 8.0); t }).collect();
        let mut t = 0.0;
        let ang_ts: Vec<f64> = (0..n / 2 + 1).map(|_| { t += rng.uniform_range(3.0, 30.0); t }).collect();
        let stream = |kind, ts: &Vec<f64>, cols| RawStream {
            subject_id: 0,
            session_id: 0,
            kind,
            timestamps: ts.clone(),
            frames: Matrix::zeros(ts.len(), cols),
            nominal_rate: 200.0,
        };
        match align(&stream(StreamKind::Emg, &emg_ts, 8), &stream(StreamKind::Angles, &ang_ts, 15), max_gap) {
            Ok(rec) => {
                prop_assert!(rec.gaps().all(|g| g <= max_gap));
                prop_assert!(rec.timestamps.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(rec.len() + rec.dropped, n);
                // every pair uses the nearest angle frame
                for (te, ta) in rec.timestamps.iter().zip(&rec.angle_timestamps) {
                    let best = ang_ts.iter().map(|a| (a - te).abs()).fold(f64::INFINITY, f64::min);
                    prop_assert!(((ta - te).abs() - best).abs() < 1e-12);
                }
            }
            Err(_) => {
                let any_close = emg_ts.iter().any(|e| ang_ts.iter().any(|a| (a - e).abs() <= max_gap));
                prop_assert!(!any_close);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn nrmse_ignores_a_common_unit_scale(seed in any::<u64>(), k in 1e-3f64..1e3, rows in 2usize..12, cols in 1usize..6) {
        let mut rng = SeededRng::new(seed);
        let target = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal() * 30.0).collect()).unwrap();
        let pred = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal() * 30.0).collect()).unwrap();
        let base = nrmse(&pred, &target, &angle_ranges(&target)).unwrap();
        let scaled_target = target.scale(k);
        let scaled = nrmse(&pred.scale(k), &scaled_target, &angle_ranges(&scaled_target)).unwrap();
        prop_assert!((scaled - base).abs() <= 1e-10 * base.max(1.0));
        let r = rmse(&pred.scale(k), &scaled_target).unwrap();
        prop_assert!((r - k * rmse(&pred, &target).unwrap()).abs() <= 1e-10 * r.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn splits_never_leak(
        sessions in prop::collection::vec(1usize..4, 2..5),
        seconds in 26.0f64..40.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(sessions.iter().sum::<usize>() >= 5);
        let data = splitcheck::dataset(&sessions, seconds, 32, seed);
        for protocol in Protocol::ALL {
            if let Err(msg) = splitcheck::check_protocol(&data, protocol, seed) {
                return Err(TestCaseError::fail(msg));
            }
        }
    }

    #[test]
    fn normalization_sees_only_training_windows(seed in any::<u64>(), fold in 0usize..3) {
        let mut data = splitcheck::dataset(&[2, 2, 2], 26.0, 32, seed);
        let mut rng = SeededRng::new(seed ^ 1);
        for rec in &mut data.recordings {
            for v in rec.emg.as_mut_slice().iter_mut().chain(rec.angles.as_mut_slice()) {
                *v = rng.normal();
            }
        }
        let plan = split(Protocol::InterSubject, &data, fold, seed).unwrap();
        let train = plan.indices(Role::Train);
        let before = Normalization::fit(&data, &train).unwrap();
        // scramble everything the held-out subject recorded
        for rec in data.recordings.iter_mut().filter(|r| r.subject_id as usize == fold) {
            rec.emg.scale_assign(1000.0);
            rec.angles.scale_assign(-7.0);
        }
        prop_assert_eq!(&Normalization::fit(&data, &train).unwrap(), &before);
    }
}

#[test]
fn mixing_perturbation_moves_covariance_monotonically() {
    let distance = |p: f64| {
        let cfg = SynthConfig {
            session_seconds: 60.0,
            subject_mixing_perturbation: p,
            noise_std: 0.0,
            shared_latents: true,
            ..SynthConfig::default()
        };
        let a = generate_session(&cfg, 0, 0).unwrap();
        let b = generate_session(&cfg, 1, 0).unwrap();
        covariance_distance(&a.emg.frames, &b.emg.frames).unwrap()
    };
    let d: Vec<f64> = [0.0, 0.2, 0.5, 1.0].iter().map(|&p| distance(p)).collect();
    assert!(d.windows(2).all(|w| w[0] < w[1]), "{d:?}");
}

#[test]
fn overlap_check_catches_a_planted_leak() {
    let data = splitcheck::dataset(&[1, 1, 1, 1, 1], 26.0, 32, 3);
    let mut plan = split(Protocol::IntraSession, &data, 0, 3).unwrap();
    splitcheck::check_no_overlap(&data, &plan).unwrap();
    let t = plan.indices(Role::Test)[0];
    plan.assignments[t + 1] = Role::Train;
    assert!(splitcheck::check_no_overlap(&data, &plan).is_err());
}

//! Leakage and coverage checks for split plans, shared by the core tests
//! and the acceptance suite.

use std::collections::BTreeSet;

use myograsp_core::datapipe::{AlignedRecording, Dataset};
use myograsp_core::numerics::{Matrix, SeededRng};
use myograsp_core::splits::{fold_count, split, Protocol, Role, SplitPlan};

/// A dataset of zero-valued recordings with jittered 5 ms timestamps;
/// `sessions[s]` is the session count of subject `s`, `seconds` per session.
pub fn dataset(sessions: &[usize], seconds: f64, stride: usize, seed: u64) -> Dataset {
    let mut rng = SeededRng::new(seed);
    let mut recs = Vec::new();
    for (subject, &n_sessions) in sessions.iter().enumerate() {
        for session in 0..n_sessions {
            let n = (seconds * 200.0) as usize + rng.below(400);
            let timestamps: Vec<f64> = (0..n).map(|i| i as f64 * 5.0 + rng.uniform_range(-1.0, 1.0)).collect();
            recs.push(AlignedRecording {
                subject_id: subject as u32,
                session_id: session as u32,
                angle_timestamps: timestamps.clone(),
                timestamps,
                emg: Matrix::zeros(n, 8),
                angles: Matrix::zeros(n, 15),
                dropped: 0,
            });
        }
    }
    Dataset::from_recordings(recs, 128, stride, 64).unwrap()
}

fn rows_overlap(data: &Dataset, a: usize, b: usize) -> bool {
    let (ra, sa, ea) = data.rows(a);
    let (rb, sb, eb) = data.rows(b);
    ra == rb && sa < eb && sb < ea
}

/// No test window shares a row with a training or validation window.
pub fn check_no_overlap(data: &Dataset, plan: &SplitPlan) -> Result<(), String> {
    let by_role = |role| plan.indices(role);
    let test = by_role(Role::Test);
    for role in [Role::Train, Role::Validation] {
        // windows are ordered by recording then row, so a merge walk suffices
        let others = by_role(role);
        let mut j = 0;
        for &t in &test {
            let (rt, st, _) = data.rows(t);
            while j < others.len() {
                let (ro, _, eo) = data.rows(others[j]);
                if (ro, eo) <= (rt, st) {
                    j += 1;
                } else {
                    break;
                }
            }
            for &o in others[j..].iter().take_while(|&&o| data.rows(o).0 == rt) {
                if rows_overlap(data, t, o) {
                    return Err(format!(
                        "{} fold {}: test window {t} overlaps {} window {o}",
                        plan.protocol.name(),
                        plan.fold,
                        role.name()
                    ));
                }
                if data.rows(o).1 >= data.rows(t).2 {
                    break;
                }
            }
        }
    }
    Ok(())
}

fn keys(data: &Dataset, plan: &SplitPlan, roles: &[Role], subject_only: bool) -> BTreeSet<(u32, u32)> {
    roles
        .iter()
        .flat_map(|&r| plan.indices(r))
        .map(|i| {
            let rec = &data.recordings[data.windows[i].recording as usize];
            (rec.subject_id, if subject_only { 0 } else { rec.session_id })
        })
        .collect()
}

/// Every check for every fold of `protocol`.
pub fn check_protocol(data: &Dataset, protocol: Protocol, seed: u64) -> Result<(), String> {
    let folds = fold_count(protocol, data);
    let mut test_hits = vec![0usize; data.len()];
    for fold in 0..folds {
        let plan = split(protocol, data, fold, seed).map_err(|e| e.to_string())?;
        if plan.assignments.len() != data.len() {
            return Err("assignment count differs from window count".into());
        }
        check_no_overlap(data, &plan)?;
        let test_has_windows = !plan.indices(Role::Test).is_empty();
        if !test_has_windows || plan.indices(Role::Train).is_empty() {
            return Err(format!("{} fold {fold}: empty train or test set", protocol.name()));
        }
        let disjoint_on = match protocol {
            Protocol::IntraSession => None,
            Protocol::InterSession => Some(false),
            Protocol::InterSubject => Some(true),
        };
        if let Some(subject_only) = disjoint_on {
            let test = keys(data, &plan, &[Role::Test], subject_only);
            let fit = keys(data, &plan, &[Role::Train, Role::Validation], subject_only);
            if let Some(k) = test.intersection(&fit).next() {
                let what = if subject_only { "subject" } else { "session" };
                return Err(format!(
                    "{} fold {fold}: {what} {k:?} in both test and training",
                    protocol.name()
                ));
            }
        }
        for i in plan.indices(Role::Test) {
            test_hits[i] += 1;
        }
    }
    if protocol != Protocol::IntraSession {
        if let Some(i) = test_hits.iter().position(|&h| h != 1) {
            return Err(format!(
                "{}: window {i} is a test window in {} folds",
                protocol.name(),
                test_hits[i]
            ));
        }
    }
    Ok(())
}

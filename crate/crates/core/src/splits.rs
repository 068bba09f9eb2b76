//! Train/validation/test assignment of dataset windows under the three
//! evaluation protocols.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::datapipe::Dataset;
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const BLOCK_MS: f64 = 12_000.0;
pub const PERIOD_MS: f64 = 3_000.0;
/// Partitions used by the cross-session protocol.
pub const SESSION_GROUPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    IntraSession,
    InterSession,
    InterSubject,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::IntraSession, Protocol::InterSession, Protocol::InterSubject];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::IntraSession => "intra",
            Protocol::InterSession => "inter-session",
            Protocol::InterSubject => "inter-subject",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "intra" | "intra-session" => Some(Protocol::IntraSession),
            "inter-session" => Some(Protocol::InterSession),
            "inter-subject" => Some(Protocol::InterSubject),
            _ => None,
        }
    }

    /// Whether domain labels exist, i.e. adversarial adaptation applies.
    pub fn has_domains(self) -> bool {
        self != Protocol::IntraSession
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Validation,
    Test,
    /// Straddles a held-out period boundary; used nowhere.
    Excluded,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
            Role::Test => "test",
            Role::Excluded => "excluded",
        }
    }
}

/// A held-out stretch `[start_ms, end_ms)` of one recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldOutPeriod {
    pub recording: usize,
    pub start_ms: f64,
    pub end_ms: f64,
    pub role: Role,
}

impl HeldOutPeriod {
    fn contains(&self, t0: f64, t1: f64) -> bool {
        t0 >= self.start_ms && t1 < self.end_ms
    }

    fn touches(&self, t0: f64, t1: f64) -> bool {
        t1 >= self.start_ms && t0 < self.end_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub fold: usize,
    pub seed: u64,
    /// One role per dataset window.
    pub assignments: Vec<Role>,
    pub periods: Vec<HeldOutPeriod>,
    /// Domain label per recording, for recordings that feed training.
    pub recording_domains: Vec<Option<usize>>,
    pub num_domains: usize,
}

impl SplitPlan {
    pub fn indices(&self, role: Role) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == role)
            .collect()
    }

    /// Counts of train, validation, test and excluded windows.
    pub fn counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for r in &self.assignments {
            c[*r as usize] += 1;
        }
        c
    }

    /// Domain labels of the given windows, if the protocol has domains.
    pub fn domain_labels(&self, data: &Dataset, windows: &[usize]) -> Option<Vec<usize>> {
        if !self.protocol.has_domains() {
            return None;
        }
        windows
            .iter()
            .map(|&i| self.recording_domains[data.windows[i].recording as usize])
            .collect()
    }
}

/// Number of whole blocks in a recording. The last sample's own interval
/// counts toward the duration, with half a sample of slack for jitter.
pub fn block_count(timestamps: &[f64]) -> usize {
    if timestamps.len() < 2 {
        return 0;
    }
    let span = timestamps[timestamps.len() - 1] - timestamps[0];
    let step = span / (timestamps.len() - 1) as f64;
    libm::floor((span + 1.5 * step) / BLOCK_MS) as usize
}

/// One randomly placed period per block, half of them (after shuffling)
/// validation and the other half test.
pub fn block_periods(recording: usize, timestamps: &[f64], rng: &mut SeededRng) -> Result<Vec<HeldOutPeriod>> {
    let blocks = block_count(timestamps);
    if blocks == 0 {
        let span = timestamps.last().zip(timestamps.first()).map_or(0.0, |(l, f)| l - f);
        return Err(Error::TooShort {
            what: "session milliseconds",
            needed: BLOCK_MS as usize,
            got: span as usize,
        });
    }
    let first = timestamps[0];
    let mut periods: Vec<HeldOutPeriod> = (0..blocks)
        .map(|b| {
            let start = first + b as f64 * BLOCK_MS + rng.uniform_range(0.0, BLOCK_MS - PERIOD_MS);
            HeldOutPeriod {
                recording,
                start_ms: start,
                end_ms: start + PERIOD_MS,
                role: Role::Validation,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..blocks).collect();
    rng.shuffle(&mut order);
    let validation_first = rng.coin();
    for (k, &p) in order.iter().enumerate() {
        periods[p].role = if (k % 2 == 0) == validation_first {
            Role::Validation
        } else {
            Role::Test
        };
    }
    Ok(periods)
}

fn recording_rng(seed: u64, data: &Dataset, r: usize) -> SeededRng {
    let rec = &data.recordings[r];
    SeededRng::derive(seed, &[0x5350_4c54, rec.subject_id as u64, rec.session_id as u64])
}

/// Role of every window of recording `r` given its held-out periods.
fn classify(data: &Dataset, windows: &[usize], periods: &[HeldOutPeriod], out: &mut [Role]) {
    for &i in windows {
        let (t0, t1) = data.span_ms(i);
        out[i] = match periods.iter().find(|p| p.touches(t0, t1)) {
            None => Role::Train,
            Some(p) if p.contains(t0, t1) => p.role,
            Some(_) => Role::Excluded,
        };
    }
}

fn windows_by_recording(data: &Dataset) -> Vec<Vec<usize>> {
    let mut by = vec![Vec::new(); data.recordings.len()];
    for (i, w) in data.windows.iter().enumerate() {
        by[w.recording as usize].push(i);
    }
    by
}

/// Held-out validation and test periods inside every session.
pub fn intra_session_split(data: &Dataset, seed: u64) -> Result<SplitPlan> {
    let by = windows_by_recording(data);
    let mut assignments = vec![Role::Excluded; data.len()];
    let mut periods = Vec::new();
    for (r, rec) in data.recordings.iter().enumerate() {
        let p = block_periods(r, &rec.timestamps, &mut recording_rng(seed, data, r))?;
        classify(data, &by[r], &p, &mut assignments);
        periods.extend(p);
    }
    Ok(SplitPlan {
        protocol: Protocol::IntraSession,
        fold: 0,
        seed,
        assignments,
        periods,
        recording_domains: vec![None; data.recordings.len()],
        num_domains: 0,
    })
}

/// Whole recordings in `test` are test data; the rest train, with the
/// validation half of their block periods held out for early stopping.
/// The test half of those periods stays training territory.
fn held_out_split(
    data: &Dataset,
    protocol: Protocol,
    fold: usize,
    seed: u64,
    test: &[bool],
    recording_domains: Vec<Option<usize>>,
    num_domains: usize,
) -> Result<SplitPlan> {
    let by = windows_by_recording(data);
    let mut assignments = vec![Role::Excluded; data.len()];
    let mut periods = Vec::new();
    for (r, rec) in data.recordings.iter().enumerate() {
        if test[r] {
            by[r].iter().for_each(|&i| assignments[i] = Role::Test);
            continue;
        }
        let mut p = block_periods(r, &rec.timestamps, &mut recording_rng(seed, data, r))?;
        p.retain(|p| p.role == Role::Validation);
        classify(data, &by[r], &p, &mut assignments);
        periods.extend(p);
    }
    Ok(SplitPlan {
        protocol,
        fold,
        seed,
        assignments,
        periods,
        recording_domains,
        num_domains,
    })
}

/// Sessions sorted by (subject, session) are dealt round-robin into five
/// groups; fold `k` tests on group `k`. Each training session is its own
/// domain.
pub fn inter_session_split(data: &Dataset, fold: usize, seed: u64) -> Result<SplitPlan> {
    let n = data.recordings.len();
    if n < SESSION_GROUPS {
        return Err(Error::TooShort {
            what: "sessions",
            needed: SESSION_GROUPS,
            got: n,
        });
    }
    if fold >= SESSION_GROUPS {
        return Err(Error::OutOfRange {
            what: "inter-session fold",
            value: fold as f64,
            lo: 0.0,
            hi: (SESSION_GROUPS - 1) as f64,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&r| (data.recordings[r].subject_id, data.recordings[r].session_id));
    let mut test = vec![false; n];
    for (rank, &r) in order.iter().enumerate() {
        test[r] = rank % SESSION_GROUPS == fold;
    }
    let mut domains = vec![None; n];
    let mut next = 0;
    for &r in &order {
        if !test[r] {
            domains[r] = Some(next);
            next += 1;
        }
    }
    held_out_split(data, Protocol::InterSession, fold, seed, &test, domains, next)
}

/// Fold `k` tests on the `k`-th subject (by id); the remaining subjects are
/// the training domains.
pub fn inter_subject_split(data: &Dataset, fold: usize, seed: u64) -> Result<SplitPlan> {
    let subjects: Vec<u32> = data
        .recordings
        .iter()
        .map(|r| r.subject_id)
        .collect::<alloc::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if subjects.len() < 2 {
        return Err(Error::TooShort {
            what: "subjects",
            needed: 2,
            got: subjects.len(),
        });
    }
    if fold >= subjects.len() {
        return Err(Error::OutOfRange {
            what: "inter-subject fold",
            value: fold as f64,
            lo: 0.0,
            hi: (subjects.len() - 1) as f64,
        });
    }
    let held = subjects[fold];
    let rank: BTreeMap<u32, usize> = subjects
        .iter()
        .filter(|&&s| s != held)
        .enumerate()
        .map(|(k, &s)| (s, k))
        .collect();
    let test: Vec<bool> = data.recordings.iter().map(|r| r.subject_id == held).collect();
    let domains = data
        .recordings
        .iter()
        .map(|r| rank.get(&r.subject_id).copied())
        .collect();
    held_out_split(data, Protocol::InterSubject, fold, seed, &test, domains, rank.len())
}

/// Number of folds a protocol offers on `data`.
pub fn fold_count(protocol: Protocol, data: &Dataset) -> usize {
    match protocol {
        Protocol::IntraSession => 1,
        Protocol::InterSession => SESSION_GROUPS,
        Protocol::InterSubject => data
            .recordings
            .iter()
            .map(|r| r.subject_id)
            .collect::<alloc::collections::BTreeSet<_>>()
            .len(),
    }
}

pub fn split(protocol: Protocol, data: &Dataset, fold: usize, seed: u64) -> Result<SplitPlan> {
    match protocol {
        Protocol::IntraSession if fold != 0 => Err(Error::OutOfRange {
            what: "intra-session fold",
            value: fold as f64,
            lo: 0.0,
            hi: 0.0,
        }),
        Protocol::IntraSession => intra_session_split(data, seed),
        Protocol::InterSession => inter_session_split(data, fold, seed),
        Protocol::InterSubject => inter_subject_split(data, fold, seed),
    }
}

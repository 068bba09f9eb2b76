//! Synthetic two-device recordings with a known generating process.
//!
//! Each session is driven by latent finger activations `a_k(t)` in `[0, 1]`
//! (plus two wrist latents in `(-1, 1)` for the mobile mode). The latents
//! are smooth sums of slow sinusoids, arranged into movement phases.
//!
//! Angles follow from the latents through the fixed map in [`angle_map`]:
//! for finger `k` with neighbour `n`,
//!
//! ```text
//! q1 = a^2 (3 - 2a)                      (MCP, smoothstep)
//! q2 = a^1.5 (0.85 + 0.15 a_n)           (PIP)
//! q3 = 0.7 q2 + 0.3 sin^2(pi a / 2)      (DIP / thumb IP)
//! angle = lo + (hi - lo) q
//! ```
//!
//! and, in mobile mode, wrist flexion `70 w1`, deviation `30 w2` and roll
//! `15 sin(pi w1 / 2) + 10 w2` degrees.
//!
//! Emg channel `c` is `round(clip(G (sum_s M[c][s] src_s + tonic) |xi| + noise))`
//! with a Gaussian carrier `xi`, i.e. integer counts like an 8-bit armband.
//! Angles are rounded to 0.01 degrees. The mixing matrix `M` is a smooth armband
//! profile scaled elementwise by `exp(p (Z_subject + 0.3 Z_session))`, so
//! `p` (`subject_mixing_perturbation`) sets the domain shift between
//! subjects and, more weakly, between sessions.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::datapipe::{preprocess_session, AlignedRecording, PipelineConfig, RawStream, StreamKind, EMG_MAX, EMG_MIN};
use crate::error::{Error, Result};
use crate::metrics;
use crate::numerics::{Matrix, SeededRng};

pub const EMG_CHANNELS: usize = 8;
pub const FINGERS: usize = 5;
const REST: f64 = 0.05;
const TONIC: f64 = 0.05;
const EMG_GAIN: f64 = 40.0;
const TRANSITION_S: f64 = 1.0;
const JITTER_MS: f64 = 1.0;
const SESSION_SHARE: f64 = 0.3;

const LATENT_STREAM: u64 = 0x4c41_5445;
const NOISE_STREAM: u64 = 0x4e4f_4953;
const MIXING_STREAM: u64 = 0x4d49_5849;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Fingers only, wrist held straight: 15 angles.
    Immobile,
    /// Fingers plus a per-session wrist posture: 18 angles.
    Mobile,
}

impl Mode {
    pub fn angle_count(self) -> usize {
        match self {
            Mode::Immobile => 15,
            Mode::Mobile => 18,
        }
    }

    pub fn latent_count(self) -> usize {
        match self {
            Mode::Immobile => FINGERS,
            Mode::Mobile => FINGERS + 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Immobile => "immobile",
            Mode::Mobile => "mobile",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "immobile" => Some(Mode::Immobile),
            "mobile" => Some(Mode::Mobile),
            _ => None,
        }
    }

    pub fn from_angle_count(n: usize) -> Option<Self> {
        match n {
            15 => Some(Mode::Immobile),
            18 => Some(Mode::Mobile),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub sessions_per_subject: usize,
    pub session_seconds: f64,
    pub mode: Mode,
    pub emg_rate: f64,
    pub angle_rate: f64,
    pub noise_std: f64,
    pub subject_mixing_perturbation: f64,
    /// All subjects perform the same movements (same latent streams).
    pub shared_latents: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_subjects: 5,
            sessions_per_subject: 8,
            session_seconds: 240.0,
            mode: Mode::Immobile,
            emg_rate: 200.0,
            angle_rate: 100.0,
            noise_std: 2.0,
            subject_mixing_perturbation: 0.8,
            shared_latents: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_subjects == 0 || self.sessions_per_subject == 0 {
            return bad("need at least one subject and one session");
        }
        if !(self.session_seconds > 0.0) || !(self.emg_rate > 0.0) || !(self.angle_rate > 0.0) {
            return bad("duration and rates must be positive");
        }
        if 1000.0 / self.emg_rate <= 2.0 * JITTER_MS || 1000.0 / self.angle_rate <= 2.0 * JITTER_MS {
            return bad("rates too high for the timestamp jitter");
        }
        if !(self.noise_std >= 0.0) || !(self.subject_mixing_perturbation >= 0.0) {
            return bad("noise and perturbation must be non-negative");
        }
        Ok(())
    }
}

/// One generated session: both device streams and the latent record
/// sampled at the emg timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub emg: RawStream,
    pub angles: RawStream,
    pub latent: Matrix,
}

impl SynthSession {
    pub fn subject_id(&self) -> u32 {
        self.emg.subject_id
    }

    pub fn session_id(&self) -> u32 {
        self.emg.session_id
    }
}

/// Lower and upper joint limits in degrees, three joints per finger from
/// thumb to little finger, then the three wrist angles.
pub const JOINT_LIMITS: [(f64, f64); 18] = [
    (0.0, 50.0),
    (0.0, 60.0),
    (0.0, 80.0),
    (0.0, 90.0),
    (0.0, 110.0),
    (0.0, 80.0),
    (0.0, 90.0),
    (0.0, 110.0),
    (0.0, 80.0),
    (0.0, 85.0),
    (0.0, 105.0),
    (0.0, 75.0),
    (0.0, 80.0),
    (0.0, 100.0),
    (0.0, 70.0),
    (-70.0, 70.0),
    (-30.0, 30.0),
    (-25.0, 25.0),
];

/// Joint angles for one latent vector (`FINGERS` activations, then the
/// wrist latents if present).
pub fn angle_map(latent: &[f64], out: &mut [f64]) {
    for k in 0..FINGERS {
        let a = latent[k].clamp(0.0, 1.0);
        let n = latent[if k + 1 < FINGERS { k + 1 } else { k - 1 }].clamp(0.0, 1.0);
        let q1 = a * a * (3.0 - 2.0 * a);
        let q2 = a * libm::sqrt(a) * (0.85 + 0.15 * n);
        let s = libm::sin(PI * a / 2.0);
        let q3 = 0.7 * q2 + 0.3 * s * s;
        for (j, q) in [q1, q2, q3].into_iter().enumerate() {
            let (lo, hi) = JOINT_LIMITS[3 * k + j];
            out[3 * k + j] = lo + (hi - lo) * q;
        }
    }
    if latent.len() > FINGERS && out.len() > 3 * FINGERS {
        let (w1, w2) = (latent[FINGERS], latent[FINGERS + 1]);
        out[15] = 70.0 * w1;
        out[16] = 30.0 * w2;
        out[17] = 15.0 * libm::sin(PI * w1 / 2.0) + 10.0 * w2;
    }
}

/// Emg sources: finger activations, then antagonist pairs per wrist latent.
fn sources(latent: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend_from_slice(&latent[..FINGERS]);
    for &w in &latent[FINGERS..] {
        out.push(w.max(0.0));
        out.push((-w).max(0.0));
    }
}

fn source_count(mode: Mode) -> usize {
    FINGERS + 2 * (mode.latent_count() - FINGERS)
}

/// Channel sensitivity to each source before any perturbation: each source
/// sits at an angle around the forearm and channels pick it up with a von
/// Mises falloff.
pub fn base_mixing(mode: Mode) -> Matrix {
    let s = source_count(mode);
    let mut m = Matrix::zeros(EMG_CHANNELS, s);
    for c in 0..EMG_CHANNELS {
        let phi = 2.0 * PI * c as f64 / EMG_CHANNELS as f64;
        for j in 0..s {
            let psi = 2.0 * PI * (j as f64 + 0.37) / s as f64;
            m[(c, j)] = 0.15 + libm::exp(2.0 * (libm::cos(phi - psi) - 1.0));
        }
    }
    m
}

/// Mixing matrix of one session.
pub fn session_mixing(config: &SynthConfig, subject: u32, session: u32) -> Matrix {
    let mut m = base_mixing(config.mode);
    let p = config.subject_mixing_perturbation;
    let mut subj = SeededRng::derive(config.seed, &[MIXING_STREAM, subject as u64]);
    let mut sess = SeededRng::derive(config.seed, &[MIXING_STREAM, subject as u64, session as u64]);
    for v in m.as_mut_slice() {
        let z = subj.normal() + SESSION_SHARE * sess.normal();
        *v *= libm::exp(p * z);
    }
    m
}

/// Smooth random signal in `(0, 1)`: a logistic squash of a few slow
/// sinusoids.
#[derive(Debug, Clone)]
struct SlowSignal {
    terms: Vec<(f64, f64, f64)>,
}

impl SlowSignal {
    fn new(rng: &mut SeededRng) -> Self {
        let terms: Vec<(f64, f64, f64)> = (0..5)
            .map(|_| {
                (
                    rng.uniform_range(0.3, 1.0),
                    rng.uniform_range(0.05, 0.6),
                    rng.uniform_range(0.0, 2.0 * PI),
                )
            })
            .collect();
        let total: f64 = terms.iter().map(|t| t.0).sum();
        SlowSignal {
            terms: terms.into_iter().map(|(a, f, p)| (a / total, f, p)).collect(),
        }
    }

    /// Raw value in `[-1, 1]`.
    fn raw(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, f, p)| a * libm::sin(2.0 * PI * f * t + p))
            .sum()
    }

    fn unit(&self, t: f64) -> f64 {
        1.0 / (1.0 + libm::exp(-4.5 * self.raw(t)))
    }
}

/// What a finger does during a movement segment.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Drive {
    Rest,
    Own,
    Shared(f64),
}

#[derive(Debug, Clone)]
struct Segment {
    start: f64,
    end: f64,
    fingers: [Drive; FINGERS],
}

fn phases(mode: Mode) -> Vec<(f64, [Drive; FINGERS], bool)> {
    use Drive::*;
    // (share of session, finger drives, split among fingers one at a time)
    let all = [Shared(1.0); FINGERS];
    let free = [Own; FINGERS];
    match mode {
        Mode::Immobile => vec![(150.0, free, true), (60.0, all, false), (30.0, free, false)],
        Mode::Mobile => vec![
            (60.0, free, true),
            (30.0, all, false),
            (30.0, [Shared(1.0), Shared(0.9), Rest, Rest, Rest], false),
            (30.0, [Shared(0.6); FINGERS], false),
            (30.0, [Own, Rest, Rest, Rest, Rest], false),
            (30.0, free, false),
        ],
    }
}

/// Movement script scaled to the session length. "Distinct finger" phases
/// give each finger its own sub-segment while the others rest.
fn script(mode: Mode, seconds: f64) -> Vec<Segment> {
    let ph = phases(mode);
    let total: f64 = ph.iter().map(|p| p.0).sum();
    let mut out = Vec::new();
    let mut t = 0.0;
    for (share, drives, distinct) in ph {
        let len = seconds * share / total;
        if distinct {
            let sub = len / FINGERS as f64;
            for k in 0..FINGERS {
                let mut f = [Drive::Rest; FINGERS];
                f[k] = drives[k];
                out.push(Segment {
                    start: t + k as f64 * sub,
                    end: t + (k + 1) as f64 * sub,
                    fingers: f,
                });
            }
        } else {
            out.push(Segment {
                start: t,
                end: t + len,
                fingers: drives,
            });
        }
        t += len;
    }
    out
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// The latent process of one session, evaluable at any time.
#[derive(Debug, Clone)]
struct LatentProcess {
    mode: Mode,
    segments: Vec<Segment>,
    own: Vec<SlowSignal>,
    shared: SlowSignal,
    wrist: Vec<(f64, SlowSignal)>,
}

/// Six wrist postures: four along flexion, one deviated, one straight.
const WRIST_POSTURES: [(f64, f64); 6] = [(-0.8, 0.0), (-0.4, 0.0), (0.4, 0.0), (0.8, 0.0), (0.0, 0.8), (0.0, 0.0)];

impl LatentProcess {
    fn new(mode: Mode, seconds: f64, session: u32, rng: &mut SeededRng) -> Self {
        let own = (0..FINGERS).map(|_| SlowSignal::new(rng)).collect();
        let shared = SlowSignal::new(rng);
        let wrist = match mode {
            Mode::Immobile => Vec::new(),
            Mode::Mobile => {
                let (p1, p2) = WRIST_POSTURES[session as usize % WRIST_POSTURES.len()];
                vec![(p1, SlowSignal::new(rng)), (p2, SlowSignal::new(rng))]
            }
        };
        LatentProcess {
            mode,
            segments: script(mode, seconds),
            own,
            shared,
            wrist,
        }
    }

    fn drive_value(&self, drive: Drive, k: usize, t: f64) -> f64 {
        match drive {
            Drive::Rest => REST,
            Drive::Own => REST + (1.0 - REST) * self.own[k].unit(t),
            Drive::Shared(scale) => REST + (1.0 - REST) * scale * self.shared.unit(t),
        }
    }

    fn eval(&self, t_ms: f64, out: &mut [f64]) {
        let t = t_ms / 1000.0;
        let segs = &self.segments;
        let i = segs.iter().position(|s| t < s.end).unwrap_or(segs.len() - 1);
        // blend towards the neighbour across each boundary
        let (j, w) = if i + 1 < segs.len() && t > segs[i].end - TRANSITION_S / 2.0 {
            (
                i + 1,
                smoothstep((t - (segs[i].end - TRANSITION_S / 2.0)) / TRANSITION_S),
            )
        } else if i > 0 && t < segs[i].start + TRANSITION_S / 2.0 {
            (
                i - 1,
                1.0 - smoothstep((t - (segs[i].start - TRANSITION_S / 2.0)) / TRANSITION_S),
            )
        } else {
            (i, 0.0)
        };
        for (k, o) in out.iter_mut().take(FINGERS).enumerate() {
            let a = self.drive_value(segs[i].fingers[k], k, t);
            let b = self.drive_value(segs[j].fingers[k], k, t);
            *o = a + w * (b - a);
        }
        for (m, (posture, wobble)) in self.wrist.iter().enumerate() {
            let centre = libm::atanh(posture / 0.95);
            out[FINGERS + m] = 0.95 * libm::tanh(centre + 0.3 * wobble.raw(t));
        }
        debug_assert_eq!(out.len(), self.mode.latent_count());
    }
}

fn jittered_grid(n: usize, rate: f64, rng: &mut SeededRng) -> Vec<f64> {
    let step = 1000.0 / rate;
    (0..n)
        .map(|i| {
            let t = i as f64 * step + rng.uniform_range(-JITTER_MS, JITTER_MS);
            libm::round(t.max(0.0) * 1000.0) / 1000.0
        })
        .collect()
}

/// Generates one session. Depends only on the config and the ids, so
/// sessions may be produced in any order or in parallel.
pub fn generate_session(config: &SynthConfig, subject: u32, session: u32) -> Result<SynthSession> {
    config.validate()?;
    let latent_owner = if config.shared_latents { 0 } else { subject as u64 + 1 };
    let mut lrng = SeededRng::derive(config.seed, &[LATENT_STREAM, latent_owner, session as u64]);
    let mut nrng = SeededRng::derive(config.seed, &[NOISE_STREAM, subject as u64, session as u64]);
    let process = LatentProcess::new(config.mode, config.session_seconds, session, &mut lrng);
    let mixing = session_mixing(config, subject, session);

    let n_emg = libm::floor(config.session_seconds * config.emg_rate) as usize;
    let n_ang = libm::floor(config.session_seconds * config.angle_rate) as usize;
    let emg_ts = jittered_grid(n_emg, config.emg_rate, &mut lrng);
    let ang_ts = jittered_grid(n_ang, config.angle_rate, &mut lrng);

    let nl = config.mode.latent_count();
    let mut latent = Matrix::zeros(n_emg, nl);
    let mut emg = Matrix::zeros(n_emg, EMG_CHANNELS);
    let mut src = Vec::with_capacity(source_count(config.mode));
    for (i, &t) in emg_ts.iter().enumerate() {
        process.eval(t, latent.row_mut(i));
        sources(latent.row(i), &mut src);
        let row = emg.row_mut(i);
        for (c, v) in row.iter_mut().enumerate() {
            let drive: f64 = mixing.row(c).iter().zip(&src).map(|(m, s)| m * s).sum::<f64>() + TONIC;
            let carrier = lrng.normal().abs();
            let noise = if config.noise_std > 0.0 {
                config.noise_std * nrng.normal()
            } else {
                0.0
            };
            *v = libm::round((EMG_GAIN * drive * carrier + noise).clamp(EMG_MIN, EMG_MAX));
        }
    }

    let na = config.mode.angle_count();
    let mut angles = Matrix::zeros(n_ang, na);
    let mut lat = vec![0.0; nl];
    for (i, &t) in ang_ts.iter().enumerate() {
        process.eval(t, &mut lat);
        let row = angles.row_mut(i);
        angle_map(&lat, row);
        for v in row.iter_mut() {
            *v = libm::round(*v * 100.0) / 100.0;
        }
    }

    Ok(SynthSession {
        emg: RawStream {
            subject_id: subject,
            session_id: session,
            kind: StreamKind::Emg,
            timestamps: emg_ts,
            frames: emg,
            nominal_rate: config.emg_rate,
        },
        angles: RawStream {
            subject_id: subject,
            session_id: session,
            kind: StreamKind::Angles,
            timestamps: ang_ts,
            frames: angles,
            nominal_rate: config.angle_rate,
        },
        latent,
    })
}

/// Every session of every subject, ordered by (subject, session).
pub fn generate(config: &SynthConfig) -> Result<Vec<SynthSession>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.n_subjects * config.sessions_per_subject);
    for s in 0..config.n_subjects as u32 {
        for r in 0..config.sessions_per_subject as u32 {
            out.push(generate_session(config, s, r)?);
        }
    }
    Ok(out)
}

/// Seconds of each session the linear baseline is fitted on.
pub const BASELINE_SECONDS: f64 = 60.0;

/// Least-squares solution of `a x = b` for a symmetric positive definite
/// `a` (Cholesky).
fn cholesky_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum();
            if i == j {
                let d = a[(i, i)] - s;
                if !(d > 0.0) {
                    return Err(Error::NonFinite {
                        context: "singular normal equations".into(),
                    });
                }
                l[(i, j)] = libm::sqrt(d);
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[(i, k)] * x[(k, c)]).sum();
            x[(i, c)] = (x[(i, c)] - s) / l[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[(k, c)]).sum();
            x[(i, c)] = (x[(i, c)] - s) / l[(i, i)];
        }
    }
    Ok(x)
}

/// Ordinary least squares with intercept from filtered emg rows to angles.
/// Returns in-sample predictions.
pub fn linear_fit(emg: &Matrix, angles: &Matrix) -> Result<Matrix> {
    let n = emg.rows();
    let mut x = Matrix::zeros(n, emg.cols() + 1);
    for i in 0..n {
        let row = x.row_mut(i);
        row[0] = 1.0;
        row[1..].copy_from_slice(emg.row(i));
    }
    let mut xtx = x.matmul_transa(&x)?;
    for i in 0..xtx.rows() {
        xtx[(i, i)] += 1e-9 * (1.0 + xtx[(i, i)]);
    }
    let beta = cholesky_solve(&xtx, &x.matmul_transa(angles)?)?;
    x.matmul(&beta)
}

/// Per-session linear read-out: a linear map from filtered emg to angles
/// is fitted on [`BASELINE_SECONDS`] worth of rows spread evenly over the
/// session (so every movement phase is seen), skipping `edge` rows at both
/// ends. Returns the in-sample predictions and their targets.
pub fn baseline_fit(rec: &AlignedRecording, edge: usize) -> Result<(Matrix, Matrix)> {
    let n = rec.len();
    let needed = 2 * edge + rec.emg.cols() + 2;
    if n < needed || rec.timestamps[n - 1] <= rec.timestamps[0] {
        return Err(Error::TooShort {
            what: "baseline rows",
            needed,
            got: n,
        });
    }
    let per_second = (n - 1) as f64 * 1000.0 / (rec.timestamps[n - 1] - rec.timestamps[0]);
    let wanted = (BASELINE_SECONDS * per_second) as usize;
    let step = ((n - 2 * edge) / wanted.max(1)).max(1);
    let rows: Vec<usize> = (edge..n - edge).step_by(step).collect();
    let pick = |m: &Matrix| {
        let data = rows.iter().flat_map(|&i| m.row(i).iter().copied()).collect();
        Matrix::from_vec(rows.len(), m.cols(), data)
    };
    let emg = pick(&rec.emg)?;
    let angles = pick(&rec.angles)?;
    Ok((linear_fit(&emg, &angles)?, angles))
}

/// NRMSE over (prediction, target) parts scored together, with ranges
/// from the pooled targets.
pub fn pooled_nrmse(parts: &[(Matrix, Matrix)]) -> Result<f64> {
    let cols = parts.first().ok_or(Error::EmptyInput("baseline parts"))?.1.cols();
    let mut preds = Vec::new();
    let mut targets = Vec::new();
    for (p, t) in parts {
        preds.extend_from_slice(p.as_slice());
        targets.extend_from_slice(t.as_slice());
    }
    let rows = targets.len() / cols;
    let pred = Matrix::from_vec(rows, cols, preds)?;
    let target = Matrix::from_vec(rows, cols, targets)?;
    metrics::nrmse(&pred, &target, &metrics::angle_ranges(&target))
}

/// NRMSE floor of the per-session linear read-out ([`baseline_fit`]) over
/// all `recordings`.
pub fn linear_baseline(recordings: &[AlignedRecording], edge: usize) -> Result<f64> {
    let parts = recordings
        .iter()
        .map(|r| baseline_fit(r, edge))
        .collect::<Result<Vec<_>>>()?;
    pooled_nrmse(&parts)
}

/// Aligns and filters generated sessions with `pipeline` and returns their
/// linear-baseline NRMSE.
pub fn session_baseline(sessions: &[SynthSession], pipeline: &PipelineConfig) -> Result<f64> {
    let recs = sessions
        .iter()
        .map(|s| preprocess_session(&s.emg, &s.angles, pipeline))
        .collect::<Result<Vec<_>>>()?;
    linear_baseline(&recs, pipeline.edge_trim)
}

/// Population channel covariance of the rows of `m`.
pub fn channel_covariance(m: &Matrix) -> Result<Matrix> {
    if m.rows() == 0 {
        return Err(Error::EmptyInput("covariance rows"));
    }
    let mean = m.mean_rows();
    let mut centred = m.clone();
    for i in 0..m.rows() {
        for (v, mu) in centred.row_mut(i).iter_mut().zip(mean.as_slice()) {
            *v -= mu;
        }
    }
    Ok(centred.matmul_transa(&centred)?.scale(1.0 / m.rows() as f64))
}

/// Frobenius norm of the difference of two channel covariances.
pub fn covariance_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    Ok(channel_covariance(a)?.sub(&channel_covariance(b)?)?.frobenius_norm())
}

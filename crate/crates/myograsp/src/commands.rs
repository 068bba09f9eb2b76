//! The five pipeline commands as library functions. `main` only parses
//! flags and maps errors to exit codes.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use myograsp_core::cells::CellKind;
use myograsp_core::datapipe::{preprocess_session, Dataset, DatasetView, Normalization, StreamKind};
use myograsp_core::metrics::{self, MetricReport};
use myograsp_core::network::Network;
use myograsp_core::splits::{self, Protocol, Role, SplitPlan};
use myograsp_core::synthgen::{self, generate_session};
use myograsp_core::training::{self, EpochRecord, TrainHooks, TrainReport};
use myograsp_core::{Error as CoreError, Matrix, SeededRng};

use crate::archive::{read_archive, write_archive, Archive};
use crate::checkpoint::{self, Checkpoint, RunMeta};
use crate::config::RunConfig;
use crate::error::{csv_error, AppError, Result};
use crate::recording::{stream_file_name, write_stream, write_table, Manifest, ManifestEntry, MANIFEST_NAME};
use crate::results::{append_rows, read_rows, render_table, summarize, write_summary, ResultRow};

const INIT_STREAM: u64 = 0x494e_4954;
const LATENT_DIR: &str = "latent";

/// Writes every synthetic session as two CSVs plus its latent record, then
/// the manifest. Returns the manifest.
pub fn generate(out: &Path, cfg: &RunConfig) -> Result<Manifest> {
    let synth = cfg.synth.to_core()?;
    let pipeline = cfg.pipeline.to_core()?;
    let latent_dir = out.join(LATENT_DIR);
    fs::create_dir_all(&latent_dir).map_err(AppError::io(&latent_dir))?;
    let mut entries = Vec::new();
    let mut fits = Vec::new();
    for subject in 0..synth.n_subjects as u32 {
        for session in 0..synth.sessions_per_subject as u32 {
            let s = generate_session(&synth, subject, session)?;
            let emg = PathBuf::from(stream_file_name(subject, session, StreamKind::Emg));
            let angles = PathBuf::from(stream_file_name(subject, session, StreamKind::Angles));
            let latent = Path::new(LATENT_DIR).join(format!("s{subject}_r{session}_latent.csv"));
            write_stream(&out.join(&emg), &s.emg)?;
            write_stream(&out.join(&angles), &s.angles)?;
            write_table(&out.join(&latent), "latent", &s.emg.timestamps, &s.latent)?;
            let rec = preprocess_session(&s.emg, &s.angles, &pipeline)?;
            fits.push(synthgen::baseline_fit(&rec, pipeline.edge_trim)?);
            log::info!("generated subject {subject} session {session}");
            entries.push(ManifestEntry {
                subject,
                session,
                emg,
                angles,
                latent: Some(latent),
            });
        }
    }
    let baseline = synthgen::pooled_nrmse(&fits)?;
    log::info!("linear baseline nrmse {baseline:.4}");
    let manifest = Manifest {
        mode: synth.mode.name().into(),
        angle_count: synth.mode.angle_count(),
        emg_channels: synthgen::EMG_CHANNELS,
        emg_rate: synth.emg_rate,
        angle_rate: synth.angle_rate,
        seed: Some(synth.seed),
        linear_baseline_nrmse: Some(baseline),
        recordings: entries,
    };
    manifest.write(&out.join(MANIFEST_NAME))?;
    Ok(manifest)
}

/// Aligns, filters and windows every recording listed in the manifest and
/// writes the archive. Returns the archive and its checksum.
pub fn preprocess(manifest_path: &Path, out: &Path, cfg: &RunConfig) -> Result<(Archive, String)> {
    let pipeline = cfg.pipeline.to_core()?;
    let manifest = Manifest::read(manifest_path)?;
    let mode = manifest.mode()?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut recordings = Vec::with_capacity(manifest.recordings.len());
    for i in 0..manifest.recordings.len() {
        let (emg, angles) = manifest.load_pair(root, i)?;
        let rec = preprocess_session(&emg, &angles, &pipeline)?;
        log::info!(
            "subject {} session {}: {} pairs, {} dropped",
            rec.subject_id,
            rec.session_id,
            rec.len(),
            rec.dropped
        );
        recordings.push(rec);
    }
    let dataset = Dataset::from_recordings(recordings, pipeline.window, pipeline.stride, pipeline.edge_trim)?;
    if dataset.is_empty() {
        return Err(CoreError::EmptyInput("windows after preprocessing").into());
    }
    log::info!("{} windows", dataset.len());
    let archive = Archive {
        mode,
        pipeline,
        linear_baseline_nrmse: manifest.linear_baseline_nrmse,
        dataset,
    };
    let sum = write_archive(out, &archive)?;
    Ok((archive, sum))
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub archive: PathBuf,
    pub model: CellKind,
    pub protocol: Protocol,
    pub fold: usize,
    pub ada: bool,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub report: Option<PathBuf>,
    pub audit: Option<PathBuf>,
}

/// Wall clock plus per-epoch logging.
struct ClockHooks {
    start: Instant,
}

impl TrainHooks for ClockHooks {
    fn now_seconds(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, r: &EpochRecord) {
        log::info!(
            "epoch {}: loss {:.5} val rmse {:.4} val nrmse {:.4} ({:.1}s)",
            r.epoch,
            r.train_loss,
            r.val_rmse,
            r.val_nrmse,
            r.seconds
        );
    }
}

fn plan_for(protocol: Protocol, data: &Dataset, fold: usize, seed: u64) -> Result<SplitPlan> {
    let folds = splits::fold_count(protocol, data);
    if fold >= folds {
        return Err(AppError::Config(format!(
            "fold {fold} out of range: {} has {folds} fold(s)",
            protocol.name()
        )));
    }
    Ok(splits::split(protocol, data, fold, seed)?)
}

/// The untrained network a run with this seed starts from.
pub fn init_network(
    cfg: &RunConfig,
    model: CellKind,
    angles: usize,
    domains: Option<usize>,
    seed: u64,
) -> Result<Network> {
    let net_cfg = cfg.network.to_core(model, angles, domains)?;
    Ok(Network::new(net_cfg, &mut SeededRng::derive(seed, &[INIT_STREAM]))?)
}

/// Trains one (model, protocol, fold, ada, seed) run and saves its checkpoint.
pub fn train(args: &TrainArgs, cfg: &RunConfig) -> Result<(Checkpoint, TrainReport)> {
    if args.ada && !args.protocol.has_domains() {
        return Err(AppError::Config(format!(
            "--ada needs a multi-domain protocol, not {}",
            args.protocol.name()
        )));
    }
    let train_cfg = cfg.train.to_core(args.seed)?;
    // fail on a bad network section before reading the archive
    cfg.network.to_core(args.model, 15, None)?;
    let (archive, checksum) = read_archive(&args.archive)?;
    let data = &archive.dataset;
    let plan = plan_for(args.protocol, data, args.fold, args.seed)?;
    let [n_train, n_val, n_test, n_excl] = plan.counts();
    log::info!("split: {n_train} train, {n_val} validation, {n_test} test, {n_excl} excluded windows");
    if let Some(path) = &args.audit {
        write_audit(path, data, &plan)?;
    }
    let train_idx = plan.indices(Role::Train);
    let val_idx = plan.indices(Role::Validation);
    let norm = Normalization::fit(data, &train_idx)?;
    let domains = if args.ada {
        plan.domain_labels(data, &train_idx)
    } else {
        None
    };
    let domain_count = args.ada.then_some(plan.num_domains);
    let net = init_network(cfg, args.model, data.angle_count, domain_count, args.seed)?;
    let train_view = DatasetView::new(data, train_idx, domains, norm.clone())?;
    let val_view = DatasetView::new(data, val_idx, None, norm.clone())?;
    let mut hooks = ClockHooks { start: Instant::now() };
    let (network, report) = training::train(net, &train_view, &val_view, &train_cfg, &mut hooks)?;
    log::info!(
        "best epoch {} of {}, val nrmse {:.4}",
        report.best_epoch,
        report.stopping_epoch,
        report.best_val_nrmse
    );
    let ckpt = Checkpoint {
        network,
        normalization: norm,
        meta: RunMeta {
            protocol: args.protocol,
            fold: args.fold,
            seed: args.seed,
            ada: args.ada,
            best_epoch: report.best_epoch,
            archive_checksum: checksum,
        },
    };
    checkpoint::save(&args.checkpoint, &ckpt)?;
    if let Some(path) = &args.report {
        write_train_report(path, &report)?;
    }
    Ok((ckpt, report))
}

/// `epoch,train_loss,val_rmse,val_nrmse,seconds`, one row per epoch.
pub fn write_train_report(path: &Path, report: &TrainReport) -> Result<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["epoch", "train_loss", "val_rmse", "val_nrmse", "seconds"])
        .map_err(csv_error(path))?;
    for e in &report.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.val_rmse.to_string(),
            e.val_nrmse.to_string(),
            e.seconds.to_string(),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(AppError::io(path))
}

/// One row per window: `sample,subject,session,start_ms,end_ms,protocol,fold,assignment`.
pub fn write_audit(path: &Path, data: &Dataset, plan: &SplitPlan) -> Result<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record([
        "sample",
        "subject",
        "session",
        "start_ms",
        "end_ms",
        "protocol",
        "fold",
        "assignment",
    ])
    .map_err(csv_error(path))?;
    for (i, role) in plan.assignments.iter().enumerate() {
        let rec = &data.recordings[data.windows[i].recording as usize];
        let (t0, t1) = data.span_ms(i);
        w.write_record([
            i.to_string(),
            rec.subject_id.to_string(),
            rec.session_id.to_string(),
            t0.to_string(),
            t1.to_string(),
            plan.protocol.name().to_string(),
            plan.fold.to_string(),
            role.name().to_string(),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(AppError::io(path))
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub archive: PathBuf,
    /// Must match the checkpoint's run when given.
    pub protocol: Option<Protocol>,
    pub fold: Option<usize>,
    pub results: PathBuf,
    /// Score the targets against themselves instead of the network.
    pub oracle: bool,
    pub trajectories: Option<PathBuf>,
}

/// Scores a checkpoint on its fold's test windows and appends `rmse` and
/// `nrmse` rows to the results CSV.
pub fn evaluate(args: &EvaluateArgs) -> Result<(MetricReport, Vec<ResultRow>)> {
    let ckpt = checkpoint::load(&args.checkpoint)?;
    let (archive, checksum) = read_archive(&args.archive)?;
    let data = &archive.dataset;
    let meta = &ckpt.meta;
    if ckpt.network.config.output_angles != data.angle_count {
        return Err(AppError::Config(format!(
            "checkpoint predicts {} angles but the archive has {}",
            ckpt.network.config.output_angles, data.angle_count
        )));
    }
    if ckpt.network.config.input_channels != data.channels() {
        return Err(AppError::Config(format!(
            "checkpoint reads {} channels but the archive has {}",
            ckpt.network.config.input_channels,
            data.channels()
        )));
    }
    if args.protocol.is_some_and(|p| p != meta.protocol) || args.fold.is_some_and(|f| f != meta.fold) {
        return Err(AppError::Config(format!(
            "checkpoint was trained for {} fold {}",
            meta.protocol.name(),
            meta.fold
        )));
    }
    if checksum != meta.archive_checksum {
        log::warn!("archive checksum differs from the one the checkpoint was trained on");
    }
    let plan = plan_for(meta.protocol, data, meta.fold, meta.seed)?;
    let test_idx = plan.indices(Role::Test);
    let view = DatasetView::new(data, test_idx.clone(), None, ckpt.normalization.clone())?;
    let (pred, target) = if args.oracle {
        let target = targets_of(data, &test_idx)?;
        (target.clone(), target)
    } else {
        training::predict(&ckpt.network, &view, 256)?
    };
    let report = metrics::evaluate(&pred, &target)?;
    log::info!(
        "{} {} fold {}: rmse {:.4} nrmse {:.4} over {} windows",
        ckpt.model().name(),
        meta.protocol.name(),
        meta.fold,
        report.rmse,
        report.nrmse,
        report.n_samples
    );
    let model = if args.oracle { "oracle" } else { ckpt.model().name() };
    let rows: Vec<ResultRow> = [("rmse", report.rmse), ("nrmse", report.nrmse)]
        .into_iter()
        .map(|(metric, value)| ResultRow {
            metric: metric.into(),
            model: model.into(),
            protocol: meta.protocol.name().into(),
            ada: meta.ada,
            fold: meta.fold,
            seed: meta.seed,
            value,
        })
        .collect();
    append_rows(&args.results, &rows)?;
    if let Some(path) = &args.trajectories {
        write_trajectories(path, data, &test_idx, &pred, &target)?;
    }
    Ok((report, rows))
}

fn targets_of(data: &Dataset, indices: &[usize]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = indices.iter().map(|&i| data.target(i)).collect();
    if rows.is_empty() {
        return Err(CoreError::EmptyInput("test windows").into());
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// Predicted and true angles per test window, in time order within each
/// recording: `subject,session,timestamp_ms,true0..,pred0..`.
pub fn write_trajectories(
    path: &Path,
    data: &Dataset,
    indices: &[usize],
    pred: &Matrix,
    target: &Matrix,
) -> Result<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["subject".to_string(), "session".into(), "timestamp_ms".into()];
    header.extend((0..target.cols()).map(|j| format!("true{j}")));
    header.extend((0..pred.cols()).map(|j| format!("pred{j}")));
    w.write_record(&header).map_err(csv_error(path))?;
    for (k, &i) in indices.iter().enumerate() {
        let win = data.windows[i];
        let rec = &data.recordings[win.recording as usize];
        let mut row = vec![
            rec.subject_id.to_string(),
            rec.session_id.to_string(),
            rec.timestamps[win.end_row as usize].to_string(),
        ];
        row.extend(target.row(k).iter().map(f64::to_string));
        row.extend(pred.row(k).iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_error(path))?;
    }
    w.flush().map_err(AppError::io(path))
}

/// Renders the results table, optionally writing it and the summary CSV.
pub fn report(results: &Path, table_out: Option<&Path>, summary_out: Option<&Path>) -> Result<String> {
    let rows = read_rows(results)?;
    if rows.is_empty() {
        return Err(AppError::format(results, "no results to report"));
    }
    let cells = summarize(&rows);
    let table = render_table(&cells);
    if let Some(path) = table_out {
        fs::write(path, &table).map_err(AppError::io(path))?;
    }
    if let Some(path) = summary_out {
        write_summary(path, &cells)?;
    }
    Ok(table)
}

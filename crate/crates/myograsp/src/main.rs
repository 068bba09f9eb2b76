use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use myograsp::commands::{self, EvaluateArgs, TrainArgs};
use myograsp::config::RunConfig;
use myograsp::Result;
use myograsp_core::cells::CellKind;
use myograsp_core::splits::Protocol;

#[derive(Parser)]
#[command(
    name = "myograsp",
    version,
    about = "Recurrent emg-to-hand-pose regression on synthetic recordings"
)]
struct Cli {
    /// TOML run configuration; `MYOGRASP_<SECTION>_<KEY>` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Vanilla,
    Gru,
    Sru,
}

impl From<Model> for CellKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Vanilla => CellKind::Vanilla,
            Model::Gru => CellKind::Gru,
            Model::Sru => CellKind::Sru,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    #[value(alias = "intra-session")]
    Intra,
    InterSession,
    InterSubject,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Intra => Protocol::IntraSession,
            ProtocolArg::InterSession => Protocol::InterSession,
            ProtocolArg::InterSubject => Protocol::InterSubject,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset: per-session emg/angle CSVs and a manifest.
    Generate {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Overrides synth.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Align, filter and window a dataset into a binary archive.
    Preprocess {
        #[arg(long, default_value = "data/manifest.toml")]
        manifest: PathBuf,
        #[arg(long, default_value = "data/archive.bin")]
        out: PathBuf,
    },
    /// Train one model on one fold and save a checkpoint.
    Train {
        #[arg(long, default_value = "data/archive.bin")]
        archive: PathBuf,
        #[arg(long, value_enum)]
        model: Model,
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        /// Train with the adversarial domain discriminator.
        #[arg(long)]
        ada: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "model.ckpt")]
        checkpoint: PathBuf,
        /// Per-epoch CSV.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-window split assignment CSV.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Score a checkpoint on its test windows and append to the results CSV.
    Evaluate {
        #[arg(long, default_value = "model.ckpt")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "data/archive.bin")]
        archive: PathBuf,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
        /// Use the true angles as predictions (metric floor check).
        #[arg(long)]
        oracle: bool,
        /// Predicted vs true angles per test window, for plotting.
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Summarize the results CSV as mean±std per table cell.
    Report {
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.validate()?;
    match cli.command {
        Command::Generate { out, seed } => {
            if let Some(seed) = seed {
                cfg.synth.seed = seed;
            }
            let m = commands::generate(&out, &cfg)?;
            println!(
                "wrote {} recordings to {} (linear baseline nrmse {:.4})",
                m.recordings.len(),
                out.display(),
                m.linear_baseline_nrmse.unwrap_or(f64::NAN)
            );
        }
        Command::Preprocess { manifest, out } => {
            let (archive, checksum) = commands::preprocess(&manifest, &out, &cfg)?;
            println!("{} windows -> {}", archive.dataset.len(), out.display());
            println!("sha256 {checksum}");
        }
        Command::Train {
            archive,
            model,
            protocol,
            fold,
            ada,
            seed,
            checkpoint,
            report,
            audit,
        } => {
            let args = TrainArgs {
                archive,
                model: model.into(),
                protocol: protocol.into(),
                fold,
                ada,
                seed,
                checkpoint,
                report,
                audit,
            };
            let (_, r) = commands::train(&args, &cfg)?;
            println!(
                "best epoch {} of {}: val nrmse {:.4} -> {}",
                r.best_epoch,
                r.stopping_epoch,
                r.best_val_nrmse,
                args.checkpoint.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            archive,
            protocol,
            fold,
            results,
            oracle,
            trajectories,
        } => {
            let args = EvaluateArgs {
                checkpoint,
                archive,
                protocol: protocol.map(Into::into),
                fold,
                results,
                oracle,
                trajectories,
            };
            let (m, _) = commands::evaluate(&args)?;
            println!("rmse {:.4} nrmse {:.4} ({} windows)", m.rmse, m.nrmse, m.n_samples);
        }
        Command::Report {
            results,
            table,
            summary,
        } => {
            print!("{}", commands::report(&results, table.as_deref(), summary.as_deref())?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

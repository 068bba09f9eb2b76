//! Run configuration: a TOML file of four optional sections, overridable
//! per key with `MYOGRASP_<SECTION>_<KEY>` environment variables.

use std::path::Path;

use myograsp_core::cells::CellKind;
use myograsp_core::datapipe::PipelineConfig;
use myograsp_core::network::NetworkConfig;
use myograsp_core::synthgen::{Mode, SynthConfig};
use myograsp_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};

pub const ENV_PREFIX: &str = "MYOGRASP_";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSection,
    pub pipeline: PipelineSection,
    pub network: NetworkSection,
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_subjects: usize,
    pub sessions_per_subject: usize,
    pub session_seconds: f64,
    pub mode: String,
    pub emg_rate: f64,
    pub angle_rate: f64,
    pub noise_std: f64,
    pub subject_mixing_perturbation: f64,
    pub shared_latents: bool,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_subjects: d.n_subjects,
            sessions_per_subject: d.sessions_per_subject,
            session_seconds: d.session_seconds,
            mode: d.mode.name().to_string(),
            emg_rate: d.emg_rate,
            angle_rate: d.angle_rate,
            noise_std: d.noise_std,
            subject_mixing_perturbation: d.subject_mixing_perturbation,
            shared_latents: d.shared_latents,
            seed: d.seed,
        }
    }
}

impl SynthSection {
    pub fn to_core(&self) -> Result<SynthConfig> {
        let mode = Mode::parse(&self.mode)
            .ok_or_else(|| AppError::Config(format!("synth.mode must be immobile or mobile, got {:?}", self.mode)))?;
        let cfg = SynthConfig {
            n_subjects: self.n_subjects,
            sessions_per_subject: self.sessions_per_subject,
            session_seconds: self.session_seconds,
            mode,
            emg_rate: self.emg_rate,
            angle_rate: self.angle_rate,
            noise_std: self.noise_std,
            subject_mixing_perturbation: self.subject_mixing_perturbation,
            shared_latents: self.shared_latents,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub max_gap_ms: f64,
    pub emg_cutoff_hz: f64,
    pub angle_cutoff_hz: f64,
    pub filter_order: usize,
    pub window: usize,
    pub stride: usize,
    pub edge_trim: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSection {
            max_gap_ms: d.max_gap_ms,
            emg_cutoff_hz: d.emg_cutoff_hz,
            angle_cutoff_hz: d.angle_cutoff_hz,
            filter_order: d.filter_order,
            window: d.window,
            stride: d.stride,
            edge_trim: d.edge_trim,
        }
    }
}

impl PipelineSection {
    pub fn to_core(&self) -> Result<PipelineConfig> {
        if self.max_gap_ms.is_nan() || self.max_gap_ms < 0.0 {
            return Err(AppError::Config("pipeline.max_gap_ms must be non-negative".into()));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(AppError::Config(
                "pipeline.window and pipeline.stride must be positive".into(),
            ));
        }
        Ok(PipelineConfig {
            max_gap_ms: self.max_gap_ms,
            emg_cutoff_hz: self.emg_cutoff_hz,
            angle_cutoff_hz: self.angle_cutoff_hz,
            filter_order: self.filter_order,
            window: self.window,
            stride: self.stride,
            edge_trim: self.edge_trim,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_size: usize,
    pub num_recurrent_layers: usize,
    pub predictor_hidden: usize,
    pub discriminator_hidden: usize,
    pub grl_lambda: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let d = NetworkConfig::new(CellKind::Sru, 15);
        NetworkSection {
            hidden_size: d.hidden_size,
            num_recurrent_layers: d.num_recurrent_layers,
            predictor_hidden: d.predictor_hidden,
            discriminator_hidden: d.discriminator_hidden,
            grl_lambda: d.grl_lambda,
        }
    }
}

impl NetworkSection {
    /// Network for `kind` predicting `angles`, with a discriminator over
    /// `domains` classes when given.
    pub fn to_core(&self, kind: CellKind, angles: usize, domains: Option<usize>) -> Result<NetworkConfig> {
        let mut cfg = NetworkConfig::new(kind, angles);
        cfg.hidden_size = self.hidden_size;
        cfg.num_recurrent_layers = self.num_recurrent_layers;
        cfg.predictor_hidden = self.predictor_hidden;
        cfg.discriminator_hidden = self.discriminator_hidden;
        cfg.grl_lambda = self.grl_lambda;
        if let Some(n) = domains {
            cfg = cfg.with_discriminator(n);
        }
        cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub disc_loss_weight: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            learning_rate: d.learning_rate,
            max_epochs: d.max_epochs,
            patience: d.patience,
            batch_size: d.batch_size,
            disc_loss_weight: d.disc_loss_weight,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            disc_loss_weight: self.disc_loss_weight,
            seed,
        };
        cfg.validate().map_err(|e| AppError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

impl RunConfig {
    /// Parses TOML text, then applies overrides from `vars`.
    pub fn from_toml<I>(text: &str, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        for (key, value) in vars {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let rest = rest.to_ascii_lowercase();
            let (section, field) = rest
                .split_once('_')
                .ok_or_else(|| AppError::Config(format!("{key}: expected {ENV_PREFIX}<SECTION>_<KEY>")))?;
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let section_table = entry
                .as_table_mut()
                .ok_or_else(|| AppError::Config(format!("{section} is not a section")))?;
            section_table.insert(field.to_string(), parse_scalar(&value));
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(e.to_string()))
    }

    /// Loads `path` (or the defaults when `None`) with process environment
    /// overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(AppError::io(p))?,
            None => String::new(),
        };
        Self::from_toml(&text, std::env::vars())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.to_core()?;
        self.pipeline.to_core()?;
        self.train.to_core(0)?;
        Ok(())
    }
}

/// An override value: a TOML literal if it parses as one, else a string.
fn parse_scalar(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    doc.parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

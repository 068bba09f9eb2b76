//! Versioned binary checkpoint: network config and run metadata as
//! `key=value` text, then normalization statistics and every parameter
//! tensor with a shape header, all f64 little-endian. Loading restores the
//! exact bits, so a reloaded network computes identical outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use myograsp_core::cells::CellKind;
use myograsp_core::datapipe::{ChannelStats, Normalization};
use myograsp_core::network::{FeatureReduction, Network, NetworkConfig};
use myograsp_core::numerics::ParamSet;
use myograsp_core::splits::Protocol;
use myograsp_core::{Matrix, SeededRng};

use crate::binio::{ReadResult, Reader, Writer};
use crate::error::{AppError, Result};

const MAGIC: &[u8; 8] = b"MYOGRASP";
const VERSION: u32 = 1;

/// How a checkpoint was produced; evaluation rebuilds the same split from it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub protocol: Protocol,
    pub fold: usize,
    pub seed: u64,
    pub ada: bool,
    pub best_epoch: usize,
    pub archive_checksum: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub normalization: Normalization,
    pub meta: RunMeta,
}

impl Checkpoint {
    pub fn model(&self) -> CellKind {
        self.network.config.cell_type
    }
}

fn header(c: &Checkpoint) -> String {
    let n = &c.network.config;
    let m = &c.meta;
    let fields: [(&str, String); 17] = [
        ("cell_type", n.cell_type.name().into()),
        ("input_channels", n.input_channels.to_string()),
        ("hidden_size", n.hidden_size.to_string()),
        ("num_recurrent_layers", n.num_recurrent_layers.to_string()),
        ("predictor_hidden", n.predictor_hidden.to_string()),
        ("discriminator_hidden", n.discriminator_hidden.to_string()),
        ("output_angles", n.output_angles.to_string()),
        ("use_discriminator", n.use_discriminator.to_string()),
        ("num_domains", n.num_domains.to_string()),
        ("grl_lambda", n.grl_lambda.to_string()),
        ("feature_reduction", n.feature_reduction.name().into()),
        ("protocol", m.protocol.name().into()),
        ("fold", m.fold.to_string()),
        ("seed", m.seed.to_string()),
        ("ada", m.ada.to_string()),
        ("best_epoch", m.best_epoch.to_string()),
        ("archive_checksum", m.archive_checksum.clone()),
    ];
    fields.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

fn stats(w: &mut Writer, s: &ChannelStats) {
    w.matrix(&Matrix::row_vector(&s.mean));
    w.matrix(&Matrix::row_vector(&s.std));
    w.u32(s.clamped.len() as u32);
    for &c in &s.clamped {
        w.u32(c as u32);
    }
}

fn read_stats(r: &mut Reader) -> ReadResult<ChannelStats> {
    let mean = r.matrix()?.into_vec();
    let std = r.matrix()?.into_vec();
    let n = r.u32()? as usize;
    let clamped = (0..n).map(|_| r.u32().map(|c| c as usize)).collect::<ReadResult<_>>()?;
    if mean.len() != std.len() {
        return Err("normalization mean/std length mismatch".into());
    }
    Ok(ChannelStats { mean, std, clamped })
}

pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.str(&header(c));
    stats(&mut w, &c.normalization.input);
    stats(&mut w, &c.normalization.target);
    let tensors = c.network.params.tensors();
    w.u32(tensors.len() as u32);
    for t in tensors {
        w.matrix(t);
    }
    w.into_bytes()
}

fn field<T: FromStr>(map: &BTreeMap<&str, &str>, key: &str) -> ReadResult<T> {
    let raw = map.get(key).ok_or_else(|| format!("missing header field {key}"))?;
    raw.parse().map_err(|_| format!("bad value for {key}: {raw:?}"))
}

pub fn decode(bytes: &[u8]) -> ReadResult<Checkpoint> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err("not a myograsp checkpoint".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let text = r.str()?;
    let map: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let kind_name: String = field(&map, "cell_type")?;
    let cell_type = CellKind::parse(&kind_name).ok_or("unknown cell_type")?;
    let reduction_name: String = field(&map, "feature_reduction")?;
    let config = NetworkConfig {
        cell_type,
        input_channels: field(&map, "input_channels")?,
        hidden_size: field(&map, "hidden_size")?,
        num_recurrent_layers: field(&map, "num_recurrent_layers")?,
        predictor_hidden: field(&map, "predictor_hidden")?,
        discriminator_hidden: field(&map, "discriminator_hidden")?,
        output_angles: field(&map, "output_angles")?,
        use_discriminator: field(&map, "use_discriminator")?,
        num_domains: field(&map, "num_domains")?,
        grl_lambda: field(&map, "grl_lambda")?,
        feature_reduction: FeatureReduction::parse(&reduction_name).ok_or("unknown feature_reduction")?,
    };
    let protocol_name: String = field(&map, "protocol")?;
    let meta = RunMeta {
        protocol: Protocol::parse(&protocol_name).ok_or("unknown protocol")?,
        fold: field(&map, "fold")?,
        seed: field(&map, "seed")?,
        ada: field(&map, "ada")?,
        best_epoch: field(&map, "best_epoch")?,
        archive_checksum: field(&map, "archive_checksum")?,
    };
    let normalization = Normalization {
        input: read_stats(&mut r)?,
        target: read_stats(&mut r)?,
    };
    // shapes come from a freshly built network; values from the file
    let mut network = Network::new(config, &mut SeededRng::new(0)).map_err(|e| e.to_string())?;
    let count = r.u32()? as usize;
    let mut slots = network.params.tensors_mut();
    if count != slots.len() {
        return Err(format!("expected {} tensors, found {count}", slots.len()));
    }
    for (i, slot) in slots.iter_mut().enumerate() {
        let m = r.matrix()?;
        if m.shape() != slot.shape() {
            return Err(format!(
                "tensor {i}: shape {:?}, expected {:?}",
                m.shape(),
                slot.shape()
            ));
        }
        **slot = m;
    }
    r.expect_end()?;
    if normalization.input.width() != network.config.input_channels
        || normalization.target.width() != network.config.output_angles
    {
        return Err("normalization widths do not match the network".into());
    }
    Ok(Checkpoint {
        network,
        normalization,
        meta,
    })
}

pub fn save(path: &Path, c: &Checkpoint) -> Result<()> {
    fs::write(path, encode(c)).map_err(AppError::io(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(AppError::io(path))?;
    decode(&bytes).map_err(|m| AppError::format(path, m))
}

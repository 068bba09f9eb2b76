//! The append-only results CSV and the summary tables built from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::Path;

use myograsp_core::metrics::mean_std;
use serde::{Deserialize, Serialize};

use crate::error::{csv_error, AppError, Result};

pub const RESULTS_HEADER: [&str; 7] = ["metric", "model", "protocol", "ada", "fold", "seed", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub metric: String,
    pub model: String,
    pub protocol: String,
    pub ada: bool,
    pub fold: usize,
    pub seed: u64,
    pub value: f64,
}

impl ResultRow {
    fn key(&self) -> (&str, &str, &str, bool, usize, u64) {
        (
            &self.metric,
            &self.model,
            &self.protocol,
            self.ada,
            self.fold,
            self.seed,
        )
    }
}

/// Appends rows, writing the header first if the file is new or empty.
pub fn append_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(AppError::io(path))?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(fresh)
        .from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(csv_error(path))?;
    }
    w.flush().map_err(AppError::io(path))
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    let header = r.headers().map_err(csv_error(path))?.clone();
    if header.iter().ne(RESULTS_HEADER) {
        return Err(AppError::format(path, "unexpected results header"));
    }
    r.deserialize().map(|row| row.map_err(csv_error(path))).collect()
}

/// Mean and population std of one table cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub metric: String,
    pub model: String,
    pub protocol: String,
    pub ada: bool,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Groups rows by (metric, model, protocol, ada) over folds and seeds. A
/// repeated (model, protocol, fold, ada, seed) run counts once, with its
/// latest value.
pub fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut latest = BTreeMap::new();
    for row in rows {
        latest.insert(row.key(), row.value);
    }
    let mut cells: BTreeMap<(&str, &str, &str, bool), Vec<f64>> = BTreeMap::new();
    for ((metric, model, protocol, ada, _, _), value) in latest {
        cells.entry((metric, model, protocol, ada)).or_default().push(value);
    }
    cells
        .into_iter()
        .map(|((metric, model, protocol, ada), values)| {
            let (mean, std) = mean_std(&values);
            CellSummary {
                metric: metric.into(),
                model: model.into(),
                protocol: protocol.into(),
                ada,
                mean,
                std,
                runs: values.len(),
            }
        })
        .collect()
}

const COLUMNS: [(&str, bool, &str); 5] = [
    ("intra", false, "Intra session"),
    ("inter-session", false, "Inter session no ADA"),
    ("inter-session", true, "Inter session with ADA"),
    ("inter-subject", false, "Inter subjects no ADA"),
    ("inter-subject", true, "Inter subjects with ADA"),
];

fn model_label(model: &str) -> String {
    match model {
        "sru" => "SRU".into(),
        "gru" => "GRU".into(),
        "vanilla" => "Vanilla RNN".into(),
        other => other.to_string(),
    }
}

/// Text table with one row per (metric, model) and one column per
/// protocol/ADA combination; empty cells print as `-`.
pub fn render_table(cells: &[CellSummary]) -> String {
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("Metric".to_string())
        .chain(std::iter::once("Model".to_string()))
        .chain(COLUMNS.iter().map(|c| c.2.to_string()))
        .collect()];
    let mut keys: Vec<(&str, &str)> = cells.iter().map(|c| (c.metric.as_str(), c.model.as_str())).collect();
    keys.sort_by_key(|&(metric, model)| (metric != "rmse", metric, model));
    keys.dedup();
    for (metric, model) in keys {
        let digits = if metric == "rmse" { 2 } else { 4 };
        let mut row = vec![metric.to_uppercase(), model_label(model)];
        for (protocol, ada, _) in COLUMNS {
            let cell = cells
                .iter()
                .find(|c| c.metric == metric && c.model == model && c.protocol == protocol && c.ada == ada);
            row.push(match cell {
                Some(c) => format!("{:.*}±{:.*}", digits, c.mean, digits, c.std),
                None => "-".into(),
            });
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
        }
    }
    out
}

/// Machine-readable summary: `metric,model,protocol,ada,mean,std`.
pub fn write_summary(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let file = File::create(path).map_err(AppError::io(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["metric", "model", "protocol", "ada", "mean", "std"])
        .map_err(csv_error(path))?;
    for c in cells {
        w.write_record([
            c.metric.clone(),
            c.model.clone(),
            c.protocol.clone(),
            c.ada.to_string(),
            c.mean.to_string(),
            c.std.to_string(),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(AppError::io(path))
}

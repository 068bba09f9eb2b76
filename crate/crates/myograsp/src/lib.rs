//! File formats, configuration and commands around `myograsp-core`:
//! recording CSVs and manifest, the preprocessed archive, checkpoints,
//! the results CSV and the summary tables.

pub mod archive;
pub mod binio;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod recording;
pub mod results;

pub use error::{AppError, Result};

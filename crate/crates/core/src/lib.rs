//! Recurrent networks for continuous hand-gesture regression from
//! multichannel sEMG windows.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numeric piece of
//! the pipeline: dense linear algebra, the vanilla/GRU/SRU cells with
//! hand-written backpropagation through time, the stacked network with its
//! predictor and gradient-reversed domain discriminator, Adam training with
//! early stopping, the signal preprocessing chain, the evaluation split
//! protocols, RMSE/NRMSE and a synthetic data generator. File formats and
//! the command line live in the `myograsp` crate.
#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cells;
pub mod datapipe;
mod error;
pub mod metrics;
pub mod network;
pub mod numerics;
pub mod splits;
pub mod synthgen;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Matrix, SeededRng};

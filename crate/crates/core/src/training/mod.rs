//! Losses, Adam, early stopping and the training loop, including the joint
//! predictor + discriminator objective for adversarial domain adaptation.

mod adam;
mod loss;

use alloc::format;
use alloc::vec::Vec;

pub use adam::{adam_step, AdamState};
pub use loss::{cross_entropy_batch, cross_entropy_loss, mse_loss, mse_loss_batch};

use crate::cells::SeqBatch;
use crate::error::{Error, Result};
use crate::metrics;
use crate::network::{Network, NetworkGrads};
use crate::numerics::{Matrix, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub disc_loss_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            max_epochs: 30,
            patience: 8,
            batch_size: 64,
            disc_loss_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.disc_loss_weight >= 0.0) {
            return Err(Error::InvalidConfig("disc_loss_weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// One materialized mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: SeqBatch,
    /// `batch x angles`, in the units the network is trained on.
    pub targets: Matrix,
    pub domains: Option<Vec<usize>>,
}

/// Indexed access to training or evaluation samples.
pub trait BatchSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn batch(&self, indices: &[usize]) -> Result<Batch>;

    /// Maps network-space angles back to degrees, in place.
    fn to_original_units(&self, _angles: &mut Matrix) {}
}

/// Small in-memory sample set.
#[derive(Debug, Clone)]
pub struct InMemorySamples {
    pub windows: Vec<Matrix>,
    pub targets: Vec<Vec<f64>>,
    pub domains: Option<Vec<usize>>,
}

impl BatchSource for InMemorySamples {
    fn len(&self) -> usize {
        self.windows.len()
    }

    fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let windows: Vec<&Matrix> = indices.iter().map(|&i| &self.windows[i]).collect();
        let rows: Vec<&[f64]> = indices.iter().map(|&i| self.targets[i].as_slice()).collect();
        Ok(Batch {
            inputs: SeqBatch::from_sequences(&windows)?,
            targets: Matrix::from_rows(&rows)?,
            domains: self.domains.as_ref().map(|d| indices.iter().map(|&i| d[i]).collect()),
        })
    }
}

/// Per-epoch observer; also supplies wall-clock time, which `no_std` lacks.
pub trait TrainHooks {
    fn now_seconds(&mut self) -> f64 {
        0.0
    }

    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

#[derive(Debug, Default)]
pub struct NoHooks;

impl TrainHooks for NoHooks {}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
    pub val_nrmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stopping_epoch: usize,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_nrmse: f64,
}

/// Patience rule on a metric where lower is better. Only a strict decrease
/// counts as a gain.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, metric: f64) -> StopDecision {
        let improved = metric < self.best;
        if improved {
            self.best = metric;
            self.best_epoch = epoch;
        }
        StopDecision {
            improved,
            stop: epoch - self.best_epoch >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Runs the network over `source` in chunks; returns predictions and
/// targets, both in original units.
pub fn predict<S: BatchSource + ?Sized>(net: &Network, source: &S, batch_size: usize) -> Result<(Matrix, Matrix)> {
    if source.is_empty() {
        return Err(Error::EmptyInput("prediction set"));
    }
    let n = source.len();
    let out_dim = net.config.output_angles;
    let mut pred = Matrix::zeros(n, out_dim);
    let mut target = Matrix::zeros(n, out_dim);
    let order: Vec<usize> = (0..n).collect();
    for (c, chunk) in order.chunks(batch_size.max(1)).enumerate() {
        let batch = source.batch(chunk)?;
        let out = net.forward(&batch.inputs)?;
        let start = c * batch_size.max(1);
        pred.rows_slice_mut(start, start + chunk.len())
            .copy_from_slice(out.angles.as_slice());
        target
            .rows_slice_mut(start, start + chunk.len())
            .copy_from_slice(batch.targets.as_slice());
    }
    source.to_original_units(&mut pred);
    source.to_original_units(&mut target);
    Ok((pred, target))
}

/// Loss and gradients of one batch.
///
/// The objective is the predictor MSE, plus `disc_loss_weight` times the
/// discriminator cross-entropy when the network has a discriminator.
pub fn batch_gradients(net: &Network, batch: &Batch, disc_loss_weight: f64) -> Result<(f64, NetworkGrads)> {
    let out = net.forward(&batch.inputs)?;
    let (mut loss, angle_grad) = mse_loss_batch(&out.angles, &batch.targets)?;
    let domain_grad = match &out.domain_logits {
        Some(logits) => {
            let labels = batch
                .domains
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("adversarial training needs domain labels".into()))?;
            let (ce, mut g) = cross_entropy_batch(logits, labels)?;
            loss += disc_loss_weight * ce;
            g.scale_assign(disc_loss_weight);
            Some(g)
        }
        None => None,
    };
    let grads = net.backward(&out.trace, &angle_grad, domain_grad.as_ref())?;
    Ok((loss, grads))
}

/// Mini-batch Adam with early stopping on validation NRMSE.
///
/// Each epoch visits the training set in a seeded shuffled order. Training
/// stops after `max_epochs` or once `patience` epochs pass without a strict
/// validation improvement; the parameters of the best epoch are returned.
pub fn train<S: BatchSource + ?Sized, V: BatchSource + ?Sized>(
    mut net: Network,
    train_set: &S,
    val_set: &V,
    config: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<(Network, TrainReport)> {
    config.validate()?;
    net.config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyInput("validation set"));
    }
    let mut rng = SeededRng::derive(config.seed, &[0x5348_5546]);
    let mut adam = AdamState::new(&net.params);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = net.clone();
    let mut epochs = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        let start = hooks.now_seconds();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train_set.batch(chunk)?;
            let (loss, grads) = batch_gradients(&net, &batch, config.disc_loss_weight)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss {loss} at epoch {epoch}, batch {b}"),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            adam_step(&mut net.params, &grads, &mut adam, config.learning_rate)?;
        }
        let (pred, target) = predict(&net, val_set, config.batch_size.max(256))?;
        let val = metrics::evaluate(&pred, &target)?;
        if !val.nrmse.is_finite() {
            return Err(Error::NonFinite {
                context: format!("validation nrmse at epoch {epoch}"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_rmse: val.rmse,
            val_nrmse: val.nrmse,
            seconds: hooks.now_seconds() - start,
        };
        hooks.on_epoch(&record);
        epochs.push(record);
        let decision = stopper.observe(epoch, val.nrmse);
        if decision.improved {
            best = net.clone();
        }
        if decision.stop {
            break;
        }
    }
    let report = TrainReport {
        stopping_epoch: epochs.len(),
        best_epoch: stopper.best_epoch(),
        best_val_nrmse: stopper.best(),
        epochs,
    };
    Ok((best, report))
}

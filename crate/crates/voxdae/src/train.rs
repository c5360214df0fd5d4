//! The denoising-autoencoder training loop.
//!
//! Each epoch walks the dataset in a seed-derived shuffled order. Every
//! presentation corrupts the input with a fresh dropout mask inside the
//! train-mode forward pass, while the loss target is always the clean grid.
//! Parameters update by SGD with momentum after every sample (batch size 1,
//! the default) or after fixed-order gradient accumulation over a minibatch.
//!
//! With `dropout_p = 0` the same loop trains the plain convolutional
//! autoencoder baseline.

use crate::corruption::NoiseSpec;
use crate::mesh::VoxelGrid;
use crate::model::{init_model, ForwardMode, ModelGrads, ModelParams, ModelSpec, StepScratch};
use crate::scalar::Scalar;
use crate::tensor::{LossKind, ShapeError};
use rand::seq::SliceRandom;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("non-finite loss {loss} at epoch {epoch}, sample {sample}")]
    NonFinite {
        epoch: usize,
        sample: String,
        loss: f64,
    },
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Hyperparameters of one training run. Defaults follow the reference
/// protocol: learning rate 0.1, momentum 0.9, 500 epochs, input dropout 0.5,
/// cross-entropy loss, pure stochastic gradient descent (batch size 1).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Input dropout rate; 0 trains the CAE baseline.
    pub dropout_p: f64,
    pub loss: LossKind,
    pub batch_size: usize,
    pub seed: u64,
    /// Checkpoint cadence in epochs, consumed by callers that persist.
    pub checkpoint_every: Option<usize>,
    /// Reuse the epoch-0 corruption mask every epoch (ablation mode)
    /// instead of drawing a fresh mask per presentation.
    pub fixed_mask: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            epochs: 500,
            dropout_p: 0.5,
            loss: LossKind::CrossEntropy,
            batch_size: 1,
            seed: 0,
            checkpoint_every: None,
            fixed_mask: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(TrainError::Invalid(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.epochs == 0 {
            return Err(TrainError::Invalid("epochs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_p) {
            return Err(TrainError::Invalid(format!(
                "dropout rate must be in [0, 1], got {}",
                self.dropout_p
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Invalid("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Trains a fresh model on the dataset; returns the parameters and the mean
/// loss per epoch.
pub fn train<F: Scalar>(
    config: &TrainConfig,
    dataset: &[VoxelGrid],
) -> Result<(ModelParams<F>, Vec<f64>), TrainError> {
    train_with(config, dataset, |_, _, _| {})
}

/// [`train`] with a per-epoch observer `(epoch, mean_loss, params)`, called
/// after every epoch (checkpoint writers hook in here).
pub fn train_with<F: Scalar>(
    config: &TrainConfig,
    dataset: &[VoxelGrid],
    mut on_epoch: impl FnMut(usize, f64, &ModelParams<F>),
) -> Result<(ModelParams<F>, Vec<f64>), TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::Invalid("dataset is empty".into()));
    }
    let mut model: ModelParams<F> =
        init_model(ModelSpec::vconv_dae(config.dropout_p), config.seed)?;
    let lr = F::from_f64(config.lr);
    let momentum = F::from_f64(config.momentum);
    let mut scratch = StepScratch::new(&model);
    // Batched mode accumulates full gradients; the batch-of-one fast path
    // goes through the fused step and needs neither buffer.
    let mut batch_buffers = if config.batch_size > 1 {
        Some((ModelGrads::zeros_like(&model), ModelGrads::zeros_like(&model)))
    } else {
        None
    };

    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffle_rng =
            crate::rng::stream_indexed(config.seed, "shuffle", &[epoch as u64]);
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0f64;

        let mut step = |model: &mut ModelParams<F>,
                        scratch: &mut StepScratch<F>,
                        batch: &[usize]|
         -> Result<f64, TrainError> {
            let mask_epoch = if config.fixed_mask { 0 } else { epoch as u64 };
            let mut batch_loss = 0.0f64;
            if let Some((acc, tmp)) = batch_buffers.as_mut() {
                acc.scale(F::ZERO);
                for &i in batch {
                    let mut mask_rng =
                        crate::rng::stream_indexed(config.seed, "mask", &[mask_epoch, i as u64]);
                    let (_, cache) = model.forward(&dataset[i], ForwardMode::Train, &mut mask_rng)?;
                    let loss = model
                        .backward_into(&cache, &dataset[i], config.loss, tmp)?
                        .to_f64();
                    check_finite(loss, epoch, &dataset[i], i)?;
                    acc.accumulate(tmp);
                    batch_loss += loss;
                }
                acc.scale(F::from_f64(1.0 / batch.len() as f64));
                model.apply_gradients(acc, lr, momentum);
            } else {
                let i = batch[0];
                let mut mask_rng =
                    crate::rng::stream_indexed(config.seed, "mask", &[mask_epoch, i as u64]);
                let (_, cache) = model.forward(&dataset[i], ForwardMode::Train, &mut mask_rng)?;
                let loss = model
                    .train_step(&cache, &dataset[i], config.loss, lr, momentum, scratch)?
                    .to_f64();
                check_finite(loss, epoch, &dataset[i], i)?;
                batch_loss = loss;
            }
            Ok(batch_loss)
        };

        for batch in order.chunks(config.batch_size) {
            total += step(&mut model, &mut scratch, batch)?;
        }
        let mean = total / dataset.len() as f64;
        history.push(mean);
        on_epoch(epoch, mean, &model);
    }
    Ok((model, history))
}

fn check_finite(
    loss: f64,
    epoch: usize,
    grid: &VoxelGrid,
    index: usize,
) -> Result<(), TrainError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(TrainError::NonFinite {
            epoch,
            sample: grid
                .provenance
                .clone()
                .unwrap_or_else(|| format!("index {index}")),
            loss,
        })
    }
}

/// Mean eval-mode reconstruction error (%) over a dataset corrupted by
/// `noise`, instance-deterministically. The validation hook for training
/// runs.
pub fn evaluate_epoch<F: Scalar>(
    params: &ModelParams<F>,
    dataset: &[VoxelGrid],
    noise: &NoiseSpec,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for (i, grid) in dataset.iter().enumerate() {
        let corrupted = noise
            .apply(grid, i as u64)
            .map_err(|e| TrainError::Invalid(e.to_string()))?;
        let prob = params.forward_eval(&corrupted)?;
        total += crate::eval::reconstruction_error(&prob, grid, 0.5);
    }
    Ok(total / dataset.len().max(1) as f64)
}

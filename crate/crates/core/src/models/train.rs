//! Training loops. One worker per run, Adam updates, deterministic batch
//! shuffles derived from the run seed; (config, seed) fixes the final
//! parameters bit for bit.

use crate::error::Result;
use crate::graph::Graph;
use crate::models::adam::{AdamConfig, AdamState};
use crate::models::counting::CountingModel;
use crate::models::pointer::PointerModel;
use crate::models::retrieval::RetrievalModel;
use crate::rng::{derive_seed, SplitMix64};
use crate::tasks::{CountingInstance, PointerInstance, RetrievalInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Triplet margin (retrieval only).
    pub margin: f64,
    /// Stop once the mean epoch loss drops to this level.
    pub early_stop_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 32,
            lr: 1e-3,
            margin: 0.2,
            early_stop_loss: Some(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub diverged: bool,
}

/// One batch step: the loss value and whether the parameters are still
/// finite after the update.
struct StepResult {
    loss: f64,
    finite: bool,
}

/// Shared epoch driver: shuffles indices, forms batches, asks the closure to
/// update on a batch, and handles early stopping and divergence.
fn run_epochs(
    data_len: usize,
    cfg: &TrainConfig,
    seed: u64,
    min_batch: usize,
    mut step: impl FnMut(&[usize]) -> Result<StepResult>,
) -> Result<TrainOutcome> {
    let mut rng = SplitMix64::new(derive_seed(seed, 0xBA7C));
    let mut indices: Vec<usize> = (0..data_len).collect();
    let mut last_mean = f64::INFINITY;
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut indices);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in indices.chunks(cfg.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let result = step(chunk)?;
            if !result.loss.is_finite() || !result.finite {
                return Ok(TrainOutcome {
                    epochs_run: epoch + 1,
                    final_loss: result.loss,
                    diverged: true,
                });
            }
            total += result.loss;
            batches += 1;
        }
        last_mean = total / batches.max(1) as f64;
        if cfg.early_stop_loss.is_some_and(|t| last_mean <= t) {
            return Ok(TrainOutcome {
                epochs_run: epoch + 1,
                final_loss: last_mean,
                diverged: false,
            });
        }
    }
    Ok(TrainOutcome {
        epochs_run: cfg.epochs,
        final_loss: last_mean,
        diverged: false,
    })
}

pub fn train_retrieval(
    model: &mut RetrievalModel,
    data: &[RetrievalInstance],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    run_epochs(data.len(), cfg, seed, 2, |chunk| {
        let batch: Vec<&RetrievalInstance> = chunk.iter().map(|&i| &data[i]).collect();
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let loss = model.batch_loss_node(&mut g, &bound, &batch, cfg.margin)?;
        let value = g.value(loss).get(0, 0);
        if value.is_finite() {
            let grads = g.reverse_sweep(loss)?;
            let gathered = model.params.gather(&grads);
            adam.step(&mut model.params, &gathered)?;
        }
        Ok(StepResult {
            loss: value / batch.len() as f64,
            finite: model.params.all_finite(),
        })
    })
}

pub fn train_counting(
    model: &mut CountingModel,
    data: &[CountingInstance],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    run_epochs(data.len(), cfg, seed, 1, |chunk| {
        let batch: Vec<&CountingInstance> = chunk.iter().map(|&i| &data[i]).collect();
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let loss = model.batch_loss_node(&mut g, &bound, &batch)?;
        let value = g.value(loss).get(0, 0);
        if value.is_finite() {
            let grads = g.reverse_sweep(loss)?;
            let gathered = model.params.gather(&grads);
            adam.step(&mut model.params, &gathered)?;
        }
        Ok(StepResult {
            loss: value,
            finite: model.params.all_finite(),
        })
    })
}

pub fn train_pointer(
    model: &mut PointerModel,
    data: &[PointerInstance],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    run_epochs(data.len(), cfg, seed, 1, |chunk| {
        let batch: Vec<&PointerInstance> = chunk.iter().map(|&i| &data[i]).collect();
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let loss = model.batch_loss_node(&mut g, &bound, &batch)?;
        let value = g.value(loss).get(0, 0);
        if value.is_finite() {
            let grads = g.reverse_sweep(loss)?;
            let gathered = model.params.gather(&grads);
            adam.step(&mut model.params, &gathered)?;
        }
        Ok(StepResult {
            loss: value,
            finite: model.params.all_finite(),
        })
    })
}

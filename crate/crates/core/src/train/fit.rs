use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    classification_metrics, compute_gradients, cross_entropy, optimizer_step, AdamState,
    ClassificationMetrics, Example, TrainConfig,
};
use crate::nnmodel::{forward, ModelParams};
use crate::seed::{derive_seed, rng};
use crate::{Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val: ClassificationMetrics,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Snapshot from `best_epoch`.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl FitOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Mean loss and metrics of `params` on `examples`.
pub(crate) fn evaluate(params: &ModelParams, examples: &[Example<'_>]) -> Result<(f64, ClassificationMetrics)> {
    let probs: Vec<Vec<f64>> = examples
        .par_iter()
        .map(|ex| forward(params, ex.seq, None).map(|t| t.probs))
        .collect::<Result<_>>()?;
    let loss = probs
        .iter()
        .zip(examples)
        .map(|(p, ex)| cross_entropy(p, ex.label))
        .sum::<f64>()
        / examples.len() as f64;
    let pos: Vec<f64> = probs.iter().map(|p| p[1]).collect();
    let labels: Vec<_> = examples.iter().map(|ex| ex.label).collect();
    Ok((loss, classification_metrics(&pos, &labels)?))
}

/// Mini-batch Adam training. Each epoch visits the training set in a
/// seeded random order; the returned parameters are the snapshot with the
/// highest validation F1, the earliest epoch winning ties.
pub fn fit(
    init: &ModelParams,
    train: &[Example<'_>],
    val: &[Example<'_>],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation splits must be non-empty"));
    }
    cfg.validate(init.config.n_layers)?;
    let frozen = cfg.frozen(init.config.n_layers);
    let mut params = init.clone();
    let mut state = AdamState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng(derive_seed(cfg.seed, &format!("epoch:{epoch}"))));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grads) = compute_gradients(&params, &batch, frozen)?;
            optimizer_step(&mut params, &grads, &mut state, cfg)?;
            loss_sum += loss * batch.len() as f64;
        }
        let (val_loss, val_metrics) = evaluate(&params, val)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val: val_metrics,
        });
        if best.as_ref().is_none_or(|(f1, _, _)| val_metrics.f1 > *f1) {
            best = Some((val_metrics.f1, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(FitOutcome {
        params,
        history,
        best_epoch,
    })
}

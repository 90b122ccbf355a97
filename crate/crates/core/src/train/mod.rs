//! Supervised fine-tuning and evaluation.

mod cv;
mod fit;
mod metrics;
mod optim;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, TokenSequence};
use crate::nnmodel::{accumulate_gradients, forward, ModelParams};
use crate::{Error, Result};

pub use cv::{cross_validate, cross_validate_folds, CvOutcome, FoldReport, MetricsReport};
pub use fit::{fit, EpochRecord, FitOutcome};
pub use metrics::{
    classification_metrics, metric_auc, metric_sens_spec_f1, summarize, ClassificationMetrics,
    MetricSummary,
};
pub use optim::{optimizer_step, AdamState};

/// Samples per gradient work unit. Fixed so that the reduction order, and
/// therefore every bit of the result, is independent of the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Encoder blocks frozen from the bottom; `None` means `n_layers / 3`.
    pub frozen_layers: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 8,
            batch_size: 32,
            frozen_layers: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn frozen(&self, n_layers: usize) -> usize {
        self.frozen_layers.unwrap_or(n_layers / 3)
    }

    pub fn validate(&self, n_layers: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if self.frozen(n_layers) >= n_layers {
            return Err(Error::invalid(format!(
                "frozen_layers must be below n_layers ({n_layers})"
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// A labelled training example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub seq: &'a TokenSequence,
    pub label: Label,
}

/// `-ln p[label]`, with the probability floored at `1e-12`.
pub fn cross_entropy(probs: &[f64], label: Label) -> f64 {
    -probs[label.index()].max(1e-12).ln()
}

pub fn mean_cross_entropy(batch: &[(&[f64], Label)]) -> f64 {
    batch.iter().map(|(p, l)| cross_entropy(p, *l)).sum::<f64>() / batch.len() as f64
}

/// Mean cross-entropy over `batch` and its exact gradient. Blocks below
/// `frozen_layers` get identically zero gradients.
pub fn compute_gradients(
    params: &ModelParams,
    batch: &[Example<'_>],
    frozen_layers: usize,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let partials: Vec<Result<(f64, ModelParams)>> = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = params.zeros_like();
            let mut loss = 0.0;
            for ex in chunk {
                loss += accumulate_gradients(params, ex.seq, ex.label.index(), scale, frozen_layers, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grads: Option<ModelParams> = None;
    for part in partials {
        let (loss, g) = part?;
        total += loss;
        match grads.as_mut() {
            None => grads = Some(g),
            Some(acc) => acc.add_scaled(&g, 1.0),
        }
    }
    Ok((total * scale, grads.expect("non-empty batch")))
}

/// Positive-class probability for every sequence, in input order.
pub fn predict_positive(params: &ModelParams, seqs: &[&TokenSequence]) -> Result<Vec<f64>> {
    seqs.par_iter()
        .map(|s| forward(params, s, None).map(|t| t.p_positive()))
        .collect()
}

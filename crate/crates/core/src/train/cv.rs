use serde::{Deserialize, Serialize};

use super::fit::evaluate;
use super::{fit, summarize, ClassificationMetrics, Example, MetricSummary, TrainConfig};
use crate::corpus::{make_trial, stratified_kfold, Label, TokenSequence, Trial};
use crate::nnmodel::{init_model, ModelConfig, ModelParams};
use crate::seed::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_fold: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub val_f1: f64,
    pub test: ClassificationMetrics,
}

/// Cross-validated test metrics of the selected training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub n_cells: usize,
    pub configs: Vec<TrainConfig>,
    /// Mean best-epoch validation F1 of each config, same order.
    pub mean_val_f1: Vec<f64>,
    pub selected_config: usize,
    pub auc: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub f1: MetricSummary,
    pub folds: Vec<FoldReport>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: MetricsReport,
    /// Trained model of each evaluated test fold under the selected config,
    /// in the order of `report.folds`.
    pub models: Vec<ModelParams>,
    pub trials: Vec<Trial>,
}

/// k-fold cross-validation over a grid of training configs. Every config
/// is trained on every fold; the one with the best mean validation F1 is
/// reported. Each fold starts from the same initial weights.
pub fn cross_validate(
    seqs: &[TokenSequence],
    labels: &[Label],
    k: usize,
    val_fraction: f64,
    model_config: &ModelConfig,
    configs: &[TrainConfig],
    seed: u64,
) -> Result<CvOutcome> {
    let all: Vec<usize> = (0..k).collect();
    cross_validate_folds(seqs, labels, k, val_fraction, model_config, configs, seed, &all)
}

/// [`cross_validate`] restricted to the listed test folds. Fold
/// assignment is unchanged, so the trained models are the ones the full
/// run would produce for those folds.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate_folds(
    seqs: &[TokenSequence],
    labels: &[Label],
    k: usize,
    val_fraction: f64,
    model_config: &ModelConfig,
    configs: &[TrainConfig],
    seed: u64,
    test_folds: &[usize],
) -> Result<CvOutcome> {
    if seqs.len() != labels.len() {
        return Err(Error::ShapeMismatch("sequences and labels differ in length".into()));
    }
    if configs.is_empty() {
        return Err(Error::invalid("no training configs given"));
    }
    if test_folds.is_empty() || test_folds.iter().any(|&j| j >= k) {
        return Err(Error::invalid(format!("test folds must be a non-empty subset of 0..{k}")));
    }
    let folds = stratified_kfold(labels, k, seed)?;
    let trials: Vec<(usize, Trial)> = test_folds
        .iter()
        .map(|&j| make_trial(&folds, labels, j, val_fraction, seed).map(|t| (j, t)))
        .collect::<Result<_>>()?;
    let init = init_model(model_config)?;
    let pick = |idx: &[usize]| -> Vec<Example<'_>> {
        idx.iter()
            .map(|&i| Example { seq: &seqs[i], label: labels[i] })
            .collect()
    };

    let mut runs: Vec<(Vec<FoldReport>, Vec<ModelParams>)> = Vec::new();
    let mut mean_val_f1 = Vec::new();
    for (c, cfg) in configs.iter().enumerate() {
        let mut reports = Vec::with_capacity(trials.len());
        let mut models = Vec::with_capacity(trials.len());
        for (j, trial) in trials.iter().map(|(j, t)| (*j, t)) {
            let mut cfg = cfg.clone();
            cfg.seed = derive_seed(cfg.seed, &format!("config:{c}:fold:{j}"));
            let train = pick(&trial.train);
            let val = pick(&trial.val);
            let test = pick(&trial.test);
            let out = fit(&init, &train, &val, &cfg)?;
            let (_, test_metrics) = evaluate(&out.params, &test)?;
            reports.push(FoldReport {
                test_fold: j,
                n_train: train.len(),
                n_val: val.len(),
                n_test: test.len(),
                best_epoch: out.best_epoch,
                val_f1: out.best().val.f1,
                test: test_metrics,
            });
            models.push(out.params);
        }
        mean_val_f1.push(reports.iter().map(|r| r.val_f1).sum::<f64>() / reports.len() as f64);
        runs.push((reports, models));
    }
    let mut selected = 0;
    for (c, &f) in mean_val_f1.iter().enumerate() {
        if f > mean_val_f1[selected] {
            selected = c;
        }
    }
    let (folds_report, models) = runs.swap_remove(selected);
    let metric = |f: fn(&ClassificationMetrics) -> f64| {
        summarize(&folds_report.iter().map(|r| f(&r.test)).collect::<Vec<_>>())
    };
    let report = MetricsReport {
        k,
        n_cells: seqs.len(),
        configs: configs.to_vec(),
        mean_val_f1,
        selected_config: selected,
        auc: metric(|m| m.auc),
        sensitivity: metric(|m| m.sensitivity),
        specificity: metric(|m| m.specificity),
        f1: metric(|m| m.f1),
        folds: folds_report,
    };
    Ok(CvOutcome {
        report,
        models,
        trials: trials.into_iter().map(|(_, t)| t).collect(),
    })
}

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::{Error, Result};

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    (pos, labels.len() - pos)
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, with tied
/// pairs counting one half.
pub fn metric_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch("scores and labels differ in length".into()));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the pair statistic, accumulated in integers
    let mut twice_u: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_here, mut neg_here) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]].is_positive() {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        twice_u += pos_here * (2 * neg_below + neg_here);
        neg_below += neg_here;
        i = j;
    }
    Ok(twice_u as f64 / (2 * n_pos as u64 * n_neg as u64) as f64)
}

/// Sensitivity, specificity and F1 with `p >= threshold` predicted positive.
pub fn metric_sens_spec_f1(probs: &[f64], labels: &[Label], threshold: f64) -> Result<(f64, f64, f64)> {
    if probs.len() != labels.len() {
        return Err(Error::ShapeMismatch("probs and labels differ in length".into()));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, l) in probs.iter().zip(labels) {
        match (p >= threshold, l.is_positive()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let sens = tp as f64 / (tp + fn_) as f64;
    let spec = tn as f64 / (tn + fp) as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        let precision = tp as f64 / (tp + fp) as f64;
        2.0 * precision * sens / (precision + sens)
    };
    Ok((sens, spec, f1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
}

pub fn classification_metrics(probs: &[f64], labels: &[Label]) -> Result<ClassificationMetrics> {
    let auc = metric_auc(probs, labels)?;
    let (sensitivity, specificity, f1) = metric_sens_spec_f1(probs, labels, 0.5)?;
    Ok(ClassificationMetrics {
        auc,
        sensitivity,
        specificity,
        f1,
    })
}

/// Per-fold values with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    /// `74.67% ± 6.74%` style rendering.
    pub fn percent(&self) -> String {
        format!("{:.2}% ± {:.2}%", 100.0 * self.mean, 100.0 * self.std)
    }
}

pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    if values.windows(2).all(|w| w[0] == w[1]) {
        return MetricSummary {
            per_fold: values.to_vec(),
            mean: values.first().copied().unwrap_or(0.0),
            std: 0.0,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MetricSummary {
        per_fold: values.to_vec(),
        mean,
        std,
    }
}

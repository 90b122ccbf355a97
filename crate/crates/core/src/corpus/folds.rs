use rand::seq::SliceRandom;

use super::Label;
use crate::seed::{derive_seed, rng};
use crate::{Error, Result};

/// Fold index for every cell, stratified by label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }
}

/// Indices into the cell list for one cross-validation trial.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trial {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_members(indices: impl Iterator<Item = usize>, labels: &[Label]) -> [Vec<usize>; 2] {
    let mut by_class = [Vec::new(), Vec::new()];
    for i in indices {
        by_class[labels[i].index()].push(i);
    }
    by_class
}

/// Stratified k-fold assignment.
///
/// Each class is shuffled under `seed` and dealt round-robin, continuing the
/// deal across classes, so fold sizes differ by at most one and every
/// fold's class counts are within one of `n_class / k`.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid("k must be at least 2"));
    }
    let by_class = class_members(0..labels.len(), labels);
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {c} has {} cells, fewer than k = {k}",
                members.len()
            )));
        }
    }
    let mut rng = rng(derive_seed(seed, "kfold"));
    let mut folds = vec![0; labels.len()];
    let mut slot = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = slot % k;
            slot += 1;
        }
    }
    Ok(FoldAssignment { folds, k })
}

/// Hold out `test_fold` and split the remaining cells into train and
/// validation sets, stratified by label.
///
/// The validation size is `ceil(val_fraction * n_remaining)`, apportioned to
/// the classes by largest remainder.
pub fn make_trial(
    folds: &FoldAssignment,
    labels: &[Label],
    test_fold: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<Trial> {
    if test_fold >= folds.k {
        return Err(Error::invalid(format!(
            "test fold {test_fold} out of range for k = {}",
            folds.k
        )));
    }
    if folds.folds.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} fold entries for {} labels",
            folds.folds.len(),
            labels.len()
        )));
    }
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::invalid("val_fraction must lie in [0, 1)"));
    }
    let test = folds.members(test_fold);
    let rest = (0..labels.len()).filter(|&i| folds.folds[i] != test_fold);
    let by_class = class_members(rest, labels);
    let n_rest: usize = by_class.iter().map(Vec::len).sum();

    // guard against 0.2 * 610 = 122.00000000000001
    let n_val = ((val_fraction * n_rest as f64) - 1e-9).ceil().max(0.0) as usize;
    let quotas: Vec<f64> = by_class
        .iter()
        .map(|m| n_val as f64 * m.len() as f64 / n_rest.max(1) as f64)
        .collect();
    let mut per_class: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..2).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut remaining = n_val - per_class.iter().sum::<usize>();
    for c in order {
        if remaining == 0 {
            break;
        }
        if per_class[c] < by_class[c].len() {
            per_class[c] += 1;
            remaining -= 1;
        }
    }

    let mut rng = rng(derive_seed(seed, &format!("trial:{test_fold}")));
    let mut trial = Trial {
        test,
        ..Trial::default()
    };
    for (mut members, n) in by_class.into_iter().zip(per_class) {
        members.shuffle(&mut rng);
        trial.val.extend_from_slice(&members[..n]);
        trial.train.extend_from_slice(&members[n..]);
    }
    trial.train.sort_unstable();
    trial.val.sort_unstable();
    Ok(trial)
}

//! Causal tracing: clean, corrupted and restored runs, the pooled
//! indirect-effect grid and the selection of the most causal neurons.

mod grid;
mod mcn;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{GeneVocabulary, TokenSequence};
use crate::nnmodel::{forward, Intervention, ModelParams, Restoration};
use crate::seed::derive_seed;
use crate::{Error, Result};

pub use grid::{build_ie_grid, IEGrid};
pub use mcn::{select_mcns, Mcn, McnSet};

/// Which difference is reported as the indirect effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IeSign {
    #[default]
    RestoredMinusCorrupted,
    CorruptedMinusRestored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceConfig {
    pub sigma: f64,
    pub percentile: f64,
    /// Trace at most this many eligible samples, in input order.
    pub sample_limit: Option<usize>,
    pub seed: u64,
    pub ie_sign: IeSign,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            sigma: 1.0,
            percentile: 95.0,
            sample_limit: None,
            seed: 0,
            ie_sign: IeSign::default(),
        }
    }
}

impl TraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid("sigma must be a non-negative number"));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::invalid("percentile must lie strictly between 0 and 100"));
        }
        if self.sample_limit == Some(0) {
            return Err(Error::invalid("sample_limit must be at least 1"));
        }
        Ok(())
    }
}

/// Token ids of `symbols`, and the symbols missing from the vocabulary.
pub fn known_tokens(vocab: &GeneVocabulary, symbols: &[String]) -> (BTreeSet<u32>, Vec<String>) {
    let mut ids = BTreeSet::new();
    let mut missing = Vec::new();
    for s in symbols {
        match vocab.id(s) {
            Some(id) => {
                ids.insert(id);
            }
            None => missing.push(s.clone()),
        }
    }
    (ids, missing)
}

/// Ascending non-pad positions holding a known token.
pub fn known_positions(seq: &TokenSequence, known: &BTreeSet<u32>) -> Vec<usize> {
    seq.real_tokens()
        .iter()
        .enumerate()
        .filter(|(_, t)| known.contains(t))
        .map(|(i, _)| i)
        .collect()
}

/// Corruption noise seed of a sample. Derived from the token content so a
/// sample is corrupted identically wherever it appears in a batch.
pub fn noise_seed(seed: u64, seq: &TokenSequence) -> u64 {
    let mut label = String::with_capacity(8 * seq.n_real + 8);
    label.push_str("noise");
    for t in seq.real_tokens() {
        label.push(':');
        label.push_str(&t.to_string());
    }
    derive_seed(seed, &label)
}

/// Positive-class probabilities of the three runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub p_clean: f64,
    pub p_corrupted: f64,
    pub p_restored: f64,
}

/// Clean run, run with the embeddings at `positions` corrupted, and the
/// same corrupted run with the clean hidden state restored at `target`
/// `(layer, position)`, layer counted from 1.
pub fn run_triplet(
    params: &ModelParams,
    seq: &TokenSequence,
    positions: &[usize],
    sigma: f64,
    noise_seed: u64,
    target: (usize, usize),
) -> Result<Triplet> {
    if positions.is_empty() {
        return Err(Error::invalid("no positions to corrupt"));
    }
    let (layer, position) = target;
    if layer == 0 || layer > params.config.n_layers || position >= seq.max_len() {
        return Err(Error::invalid(format!("restoration target {target:?} out of range")));
    }
    let clean = forward(params, seq, None)?;
    let mut iv = Intervention {
        corrupt_positions: positions.to_vec(),
        sigma,
        noise_seed,
        restore: Vec::new(),
    };
    let corrupted = forward(params, seq, Some(&iv))?;
    iv.restore.push(Restoration {
        layer,
        position,
        vector: clean.hidden[layer].row(position).to_vec(),
    });
    let restored = forward(params, seq, Some(&iv))?;
    Ok(Triplet {
        p_clean: clean.p_positive(),
        p_corrupted: corrupted.p_positive(),
        p_restored: restored.p_positive(),
    })
}

/// `p_restored - p_corrupted`.
pub fn indirect_effect(p_corrupted: f64, p_restored: f64) -> f64 {
    p_restored - p_corrupted
}

impl IeSign {
    pub fn apply(self, p_corrupted: f64, p_restored: f64) -> f64 {
        match self {
            IeSign::RestoredMinusCorrupted => indirect_effect(p_corrupted, p_restored),
            IeSign::CorruptedMinusRestored => indirect_effect(p_restored, p_corrupted),
        }
    }
}

/// Sum in ascending order so the result does not depend on input order.
pub(crate) fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

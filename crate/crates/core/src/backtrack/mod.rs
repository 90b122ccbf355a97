//! Backward propagation of neuron indirect effects through attention
//! weights, yielding a score for every input gene token.

mod report;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::nnmodel::RunTrace;
use crate::trace::McnSet;
use crate::{Error, Result};

pub use report::{format_mcgs, score_tokens, top_mcgs, GeneScore, GeneScoreReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    #[default]
    Mean,
    /// Elementwise maximum over heads, each column rescaled to sum to one.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BacktrackMode {
    /// Only chains whose every unit above the start is an MCN.
    #[default]
    Strict,
    /// All units of the next layer, with zero IE off the MCN set.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktrackConfig {
    pub mode: BacktrackMode,
    pub head_mode: HeadMode,
}

/// Interconnection strengths between consecutive layers over the non-pad
/// positions of one sample: `w[l - 1][[i, k]]` links unit `i` of layer `l`
/// to unit `k` of layer `l + 1`, for `l = 1..n_layers - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub w: Vec<Array2<f64>>,
    pub n_layers: usize,
    pub n_real: usize,
}

impl LayerWeights {
    pub fn new(n_layers: usize, n_real: usize, w: Vec<Array2<f64>>) -> Result<Self> {
        if n_layers == 0 || w.len() != n_layers - 1 {
            return Err(Error::ShapeMismatch(format!(
                "{} weight matrices for {n_layers} layers",
                w.len()
            )));
        }
        if w.iter().any(|m| m.nrows() != n_real || m.ncols() != n_real) {
            return Err(Error::ShapeMismatch("weight matrices must be square and equal".into()));
        }
        Ok(LayerWeights { w, n_layers, n_real })
    }

    pub fn get(&self, layer: usize, i: usize, k: usize) -> f64 {
        self.w[layer - 1][[i, k]]
    }
}

/// `W[l][i][k]`: attention that query `k` of layer `l + 1` pays to key `i`,
/// combined over heads. Pad positions are dropped.
pub fn attention_to_weights(trace: &RunTrace, head_mode: HeadMode) -> Result<LayerWeights> {
    let n_layers = trace.n_layers();
    let n = trace.n_real;
    if n_layers == 0 || trace.attn.iter().any(|heads| heads.is_empty()) {
        return Err(Error::invalid("trace holds no attention"));
    }
    let mut w = Vec::with_capacity(n_layers - 1);
    for heads in &trace.attn[1..] {
        let mut m = Array2::<f64>::zeros((n, n));
        match head_mode {
            HeadMode::Mean => {
                for a in heads {
                    for i in 0..n {
                        for k in 0..n {
                            m[[i, k]] += a[[k, i]];
                        }
                    }
                }
                m /= heads.len() as f64;
            }
            HeadMode::Max => {
                for i in 0..n {
                    for k in 0..n {
                        m[[i, k]] = heads.iter().map(|a| a[[k, i]]).fold(0.0, f64::max);
                    }
                }
                for mut col in m.columns_mut() {
                    let s = col.sum();
                    if s > 0.0 {
                        col /= s;
                    }
                }
            }
        }
        w.push(m);
    }
    LayerWeights::new(n_layers, n, w)
}

/// Per-layer token scores of one sample. `s[l - 1][i]`, with the top
/// layer identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktrackScores {
    pub s: Vec<Vec<f64>>,
    pub mode: BacktrackMode,
}

impl BacktrackScores {
    /// Scores of the input gene tokens.
    pub fn first_layer(&self) -> &[f64] {
        &self.s[0]
    }
}

/// Runs the recursion `s[l][i] = sum_k W[l][i][k] * (IE(l+1, k) + s[l+1][k])`
/// from `s[L] = 0` down to layer 1. MCNs at pad positions of this sample
/// do not take part.
pub fn backtrack_sample(weights: &LayerWeights, mcns: &McnSet, mode: BacktrackMode) -> Result<BacktrackScores> {
    let n_layers = weights.n_layers;
    let n = weights.n_real;
    let mut ie = vec![vec![0.0; n]; n_layers];
    let mut is_mcn = vec![vec![false; n]; n_layers];
    for m in &mcns.entries {
        if m.layer == 0 || m.layer > n_layers {
            return Err(Error::ShapeMismatch(format!(
                "MCN at layer {} of a {n_layers}-layer model",
                m.layer
            )));
        }
        if m.position < n {
            ie[m.layer - 1][m.position] = m.mean_ie;
            is_mcn[m.layer - 1][m.position] = true;
        }
    }
    let mut s = vec![vec![0.0; n]; n_layers];
    for l in (1..n_layers).rev() {
        let w = &weights.w[l - 1];
        let (lower, upper) = s.split_at_mut(l);
        let above = &upper[0];
        let next_ie = &ie[l];
        let next_mcn = &is_mcn[l];
        for (i, out) in lower[l - 1].iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..n {
                if mode == BacktrackMode::Strict && !next_mcn[k] {
                    continue;
                }
                acc += w[[i, k]] * (next_ie[k] + above[k]);
            }
            *out = acc;
        }
    }
    Ok(BacktrackScores { s, mode })
}

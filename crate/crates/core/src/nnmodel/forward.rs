use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand_distr::{Distribution, StandardNormal};

use super::{LayerParams, ModelParams};
use crate::corpus::TokenSequence;
use crate::seed::rng;
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;

/// Overwrite one hidden vector with a stored (clean) value.
#[derive(Debug, Clone, PartialEq)]
pub struct Restoration {
    /// Encoder layer, `1..=n_layers`.
    pub layer: usize,
    pub position: usize,
    pub vector: Vec<f64>,
}

/// Corruption of input embeddings plus optional restorations.
///
/// Noise is drawn per corrupted position (ascending) and per dimension
/// from `N(0, sigma^2)` seeded by `noise_seed`, and added to the layer-0
/// hidden states before the first block reads them. Each restoration
/// replaces `hidden[layer][position]` right after `layer` computes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Intervention {
    pub corrupt_positions: Vec<usize>,
    pub sigma: f64,
    pub noise_seed: u64,
    pub restore: Vec<Restoration>,
}

/// Everything a forward pass computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    /// `hidden[l]` is `seq_len x d_model`; `l = 0` is the embedding layer.
    pub hidden: Vec<Array2<f64>>,
    /// `attn[l - 1][h]` is the `seq_len x seq_len` attention of layer `l`,
    /// rows are queries and columns keys.
    pub attn: Vec<Vec<Array2<f64>>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub n_real: usize,
}

impl RunTrace {
    pub fn n_layers(&self) -> usize {
        self.attn.len()
    }

    /// Probability of the positive (early-AD) class.
    pub fn p_positive(&self) -> f64 {
        self.probs[1]
    }
}

/// Intermediate values of one block, kept for the backward pass.
pub(crate) struct LayerCache {
    pub x_in: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// per head, `seq_len x seq_len`
    pub attn: Vec<Array2<f64>>,
    pub concat: Array2<f64>,
    pub xhat1: Array2<f64>,
    pub inv_std1: Array1<f64>,
    pub y: Array2<f64>,
    pub pre_act: Array2<f64>,
    pub act: Array2<f64>,
    pub xhat2: Array2<f64>,
    pub inv_std2: Array1<f64>,
    pub out: Array2<f64>,
}

pub(crate) fn check_sequence(params: &ModelParams, seq: &TokenSequence) -> Result<()> {
    let cfg = &params.config;
    let len = seq.tokens.len();
    if len == 0 || len > cfg.max_len {
        return Err(Error::ShapeMismatch(format!(
            "sequence length {len} not in 1..={}",
            cfg.max_len
        )));
    }
    if seq.n_real == 0 || seq.n_real > len {
        return Err(Error::invalid(format!(
            "sequence needs 1..={len} real tokens, has {}",
            seq.n_real
        )));
    }
    if let Some(&id) = seq.tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab_size: cfg.vocab_size,
        });
    }
    Ok(())
}

pub(crate) fn embed(params: &ModelParams, seq: &TokenSequence) -> Array2<f64> {
    let len = seq.tokens.len();
    let mut x = params.pos_emb.slice(s![..len, ..]).to_owned();
    for (mut row, &t) in x.outer_iter_mut().zip(&seq.tokens) {
        row += &params.tok_emb.row(t as usize);
    }
    x
}

fn layer_norm(
    r: &Array2<f64>,
    gain: &Array1<f64>,
    bias: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = r.ncols() as f64;
    let mut xhat = r.clone();
    let mut inv_std = Array1::zeros(r.nrows());
    for (mut row, s) in xhat.outer_iter_mut().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        row *= *s;
    }
    let y = &xhat * gain + bias;
    (y, xhat, inv_std)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// One encoder block. Keys at positions `>= n_real` are masked out.
pub(crate) fn layer_forward(
    lp: &LayerParams,
    n_heads: usize,
    x: Array2<f64>,
    n_real: usize,
) -> LayerCache {
    let len = x.nrows();
    let d = x.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = x.dot(&lp.wq) + &lp.bq;
    let k = x.dot(&lp.wk) + &lp.bk;
    let v = x.dot(&lp.wv) + &lp.bv;

    let mut concat = Array2::zeros((len, d));
    let mut attn = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let qh = q.slice(cols);
        let kh = k.slice(s![..n_real, h * dh..(h + 1) * dh]);
        let vh = v.slice(s![..n_real, h * dh..(h + 1) * dh]);
        let mut scores = qh.dot(&kh.t());
        scores *= scale;
        for mut row in scores.outer_iter_mut() {
            softmax_in_place(row.as_slice_mut().expect("contiguous row"));
        }
        concat.slice_mut(cols).assign(&scores.dot(&vh));
        let mut a = Array2::zeros((len, len));
        a.slice_mut(s![.., ..n_real]).assign(&scores);
        attn.push(a);
    }

    let z = concat.dot(&lp.wo) + &lp.bo;
    let r1 = &x + &z;
    let (y, xhat1, inv_std1) = layer_norm(&r1, &lp.ln1_gain, &lp.ln1_bias);
    let pre_act = y.dot(&lp.w1) + &lp.b1;
    let act = pre_act.mapv(gelu);
    let f = act.dot(&lp.w2) + &lp.b2;
    let r2 = &y + &f;
    let (out, xhat2, inv_std2) = layer_norm(&r2, &lp.ln2_gain, &lp.ln2_bias);

    LayerCache {
        x_in: x,
        q,
        k,
        v,
        attn,
        concat,
        xhat1,
        inv_std1,
        y,
        pre_act,
        act,
        xhat2,
        inv_std2,
        out,
    }
}

pub(crate) fn pooled(hidden: &Array2<f64>, n_real: usize) -> Array1<f64> {
    hidden
        .slice(s![..n_real, ..])
        .mean_axis(Axis(0))
        .expect("n_real >= 1")
}

pub(crate) fn head_logits(params: &ModelParams, pooled: ArrayView1<f64>) -> Vec<f64> {
    (pooled.dot(&params.head_w) + &params.head_b).to_vec()
}

fn check_intervention(params: &ModelParams, len: usize, iv: &Intervention) -> Result<()> {
    if !(iv.sigma >= 0.0) || !iv.sigma.is_finite() {
        return Err(Error::invalid("sigma must be a finite non-negative number"));
    }
    if let Some(&p) = iv.corrupt_positions.iter().find(|&&p| p >= len) {
        return Err(Error::invalid(format!("corrupt position {p} out of range")));
    }
    let n_layers = params.config.n_layers;
    for r in &iv.restore {
        if r.layer == 0 || r.layer > n_layers {
            return Err(Error::invalid(format!(
                "restore layer {} not in 1..={n_layers}",
                r.layer
            )));
        }
        if r.position >= len {
            return Err(Error::invalid(format!(
                "restore position {} out of range",
                r.position
            )));
        }
        if r.vector.len() != params.config.d_model {
            return Err(Error::ShapeMismatch(format!(
                "restore vector has {} entries, d_model is {}",
                r.vector.len(),
                params.config.d_model
            )));
        }
    }
    Ok(())
}

pub(crate) fn corrupt(x: &mut Array2<f64>, iv: &Intervention) {
    if iv.sigma == 0.0 {
        return;
    }
    let mut positions = iv.corrupt_positions.clone();
    positions.sort_unstable();
    positions.dedup();
    let mut r = rng(iv.noise_seed);
    for p in positions {
        for v in x.row_mut(p).iter_mut() {
            let z: f64 = StandardNormal.sample(&mut r);
            *v += iv.sigma * z;
        }
    }
}

/// Run the classifier, recording every hidden state and attention pattern.
pub fn forward(
    params: &ModelParams,
    seq: &TokenSequence,
    intervention: Option<&Intervention>,
) -> Result<RunTrace> {
    check_sequence(params, seq)?;
    let len = seq.tokens.len();
    if let Some(iv) = intervention {
        check_intervention(params, len, iv)?;
    }
    let n_real = seq.n_real;
    let mut x = embed(params, seq);
    if let Some(iv) = intervention {
        corrupt(&mut x, iv);
    }
    let mut hidden = Vec::with_capacity(params.layers.len() + 1);
    let mut attn = Vec::with_capacity(params.layers.len());
    hidden.push(x.clone());
    for (l, lp) in params.layers.iter().enumerate() {
        let cache = layer_forward(lp, params.config.n_heads, x, n_real);
        let mut out = cache.out;
        if let Some(iv) = intervention {
            for r in iv.restore.iter().filter(|r| r.layer == l + 1) {
                out.row_mut(r.position)
                    .assign(&ArrayView1::from(r.vector.as_slice()));
            }
        }
        attn.push(cache.attn);
        hidden.push(out.clone());
        x = out;
    }
    let logits = head_logits(params, pooled(&x, n_real).view());
    let probs = softmax(&logits);
    Ok(RunTrace {
        hidden,
        attn,
        logits,
        probs,
        n_real,
    })
}

/// Class probabilities obtained by feeding `hidden` (the output of encoder
/// layer `layer`, or the embeddings when `layer == 0`) through the
/// remaining blocks and the head.
///
/// Shares the block code with [`forward`], so resuming from a recorded
/// (and possibly patched) hidden state is bit-identical to a full run with
/// the same patch.
pub fn resume_from(
    params: &ModelParams,
    layer: usize,
    hidden: Array2<f64>,
    n_real: usize,
) -> Result<Vec<f64>> {
    let cfg = &params.config;
    if layer > cfg.n_layers {
        return Err(Error::invalid(format!(
            "layer {layer} exceeds n_layers {}",
            cfg.n_layers
        )));
    }
    if hidden.ncols() != cfg.d_model || n_real == 0 || n_real > hidden.nrows() {
        return Err(Error::ShapeMismatch("hidden state shape".into()));
    }
    let mut x = hidden;
    for lp in &params.layers[layer..] {
        x = layer_forward(lp, cfg.n_heads, x, n_real).out;
    }
    let logits = head_logits(params, pooled(&x, n_real).view());
    Ok(softmax(&logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{truncate_and_pad, PAD_ID};
    use crate::nnmodel::{init_model, ModelConfig};

    fn setup() -> (ModelParams, TokenSequence) {
        let cfg = ModelConfig {
            n_layers: 3,
            n_heads: 2,
            d_model: 8,
            d_ff: 16,
            vocab_size: 30,
            max_len: 8,
            n_classes: 2,
            init_seed: 3,
        };
        let params = init_model(&cfg).unwrap();
        let seq = truncate_and_pad(&[4, 17, 9, 22, 1], 8, PAD_ID);
        (params, seq)
    }

    #[test]
    fn trace_invariants() {
        let (params, seq) = setup();
        let t = forward(&params, &seq, None).unwrap();
        assert_eq!(t.hidden.len(), 4);
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for layer in &t.attn {
            for a in layer {
                for (qi, row) in a.outer_iter().enumerate() {
                    assert!((row.sum() - 1.0).abs() < 1e-6, "query {qi}");
                    assert!(row.slice(s![seq.n_real..]).iter().all(|&w| w == 0.0));
                }
            }
        }
        assert_eq!(t, forward(&params, &seq, None).unwrap());
    }

    #[test]
    fn zero_sigma_is_a_no_op() {
        let (params, seq) = setup();
        let clean = forward(&params, &seq, None).unwrap();
        let iv = Intervention {
            corrupt_positions: vec![0, 2],
            sigma: 0.0,
            noise_seed: 11,
            restore: vec![],
        };
        assert_eq!(forward(&params, &seq, Some(&iv)).unwrap(), clean);
    }

    #[test]
    fn corruption_changes_output_and_is_seeded() {
        let (params, seq) = setup();
        let clean = forward(&params, &seq, None).unwrap();
        let iv = Intervention {
            corrupt_positions: vec![1],
            sigma: 1.0,
            noise_seed: 11,
            restore: vec![],
        };
        let a = forward(&params, &seq, Some(&iv)).unwrap();
        assert_ne!(a.probs, clean.probs);
        assert_eq!(a.hidden[0].row(0), clean.hidden[0].row(0));
        assert_ne!(a.hidden[0].row(1), clean.hidden[0].row(1));
        assert_eq!(a, forward(&params, &seq, Some(&iv)).unwrap());
    }

    #[test]
    fn restoring_every_final_position_recovers_clean_probs() {
        let (params, seq) = setup();
        let clean = forward(&params, &seq, None).unwrap();
        let last = params.config.n_layers;
        let iv = Intervention {
            corrupt_positions: vec![0, 1, 3],
            sigma: 1.0,
            noise_seed: 2,
            restore: (0..seq.tokens.len())
                .map(|i| Restoration {
                    layer: last,
                    position: i,
                    vector: clean.hidden[last].row(i).to_vec(),
                })
                .collect(),
        };
        let restored = forward(&params, &seq, Some(&iv)).unwrap();
        for (a, b) in restored.probs.iter().zip(&clean.probs) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn restoration_matches_manual_two_pass() {
        // restored run == corrupted hidden at layer l with row i patched,
        // pushed through the remaining layers by hand
        let (params, seq) = setup();
        let clean = forward(&params, &seq, None).unwrap();
        let base = Intervention {
            corrupt_positions: vec![0, 2],
            sigma: 1.0,
            noise_seed: 8,
            restore: vec![],
        };
        let corrupted = forward(&params, &seq, Some(&base)).unwrap();
        for l in 1..=3 {
            for i in 0..seq.n_real {
                let iv = Intervention {
                    restore: vec![Restoration {
                        layer: l,
                        position: i,
                        vector: clean.hidden[l].row(i).to_vec(),
                    }],
                    ..base.clone()
                };
                let full = forward(&params, &seq, Some(&iv)).unwrap();
                let mut x = corrupted.hidden[l].clone();
                x.row_mut(i).assign(&clean.hidden[l].row(i));
                for lp in &params.layers[l..] {
                    x = layer_forward(lp, 2, x, seq.n_real).out;
                }
                let logits = head_logits(&params, pooled(&x, seq.n_real).view());
                assert_eq!(full.probs, softmax(&logits));
                let mut patched = corrupted.hidden[l].clone();
                patched.row_mut(i).assign(&clean.hidden[l].row(i));
                assert_eq!(resume_from(&params, l, patched, seq.n_real).unwrap(), full.probs);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (params, seq) = setup();
        let mut bad = seq.clone();
        bad.tokens[0] = 30;
        assert!(matches!(
            forward(&params, &bad, None),
            Err(Error::TokenOutOfRange { id: 30, .. })
        ));
        let iv = Intervention {
            restore: vec![Restoration {
                layer: 4,
                position: 0,
                vector: vec![0.0; 8],
            }],
            ..Intervention::default()
        };
        assert!(forward(&params, &seq, Some(&iv)).is_err());
        let iv = Intervention {
            restore: vec![Restoration {
                layer: 0,
                position: 0,
                vector: vec![0.0; 8],
            }],
            ..Intervention::default()
        };
        assert!(forward(&params, &seq, Some(&iv)).is_err());
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }
}

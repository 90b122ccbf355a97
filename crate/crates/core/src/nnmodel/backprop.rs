//! Reverse-mode pass through the encoder for the cross-entropy loss.

use ndarray::{s, Array1, Array2, Axis};

use super::forward::{check_sequence, embed, gelu_grad, head_logits, layer_forward, pooled, softmax, LayerCache};
use super::{LayerParams, ModelParams};
use crate::corpus::TokenSequence;
use crate::Result;

pub(crate) const PROB_FLOOR: f64 = 1e-12;

fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: &Array1<f64>,
    grads: Option<(&mut Array1<f64>, &mut Array1<f64>)>,
) -> Array2<f64> {
    if let Some((g_gain, g_bias)) = grads {
        *g_gain += &(dy * xhat).sum_axis(Axis(0));
        *g_bias += &dy.sum_axis(Axis(0));
    }
    let d = dy.ncols() as f64;
    let mut dx = dy * gain;
    for ((mut row, xh), &s) in dx.outer_iter_mut().zip(xhat.outer_iter()).zip(inv_std) {
        let mean_d = row.sum() / d;
        let mean_dx = row.dot(&xh) / d;
        row.zip_mut_with(&xh, |v, &x| *v = s * (*v - mean_d - x * mean_dx));
    }
    dx
}

/// Backpropagate `d_out` through one block. Parameter gradients are added
/// into `grads` when given; the input gradient is always returned.
fn layer_backward(
    lp: &LayerParams,
    c: &LayerCache,
    d_out: &Array2<f64>,
    n_heads: usize,
    n_real: usize,
    mut grads: Option<&mut LayerParams>,
) -> Array2<f64> {
    let len = d_out.nrows();
    let d = d_out.ncols();
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let dr2 = layer_norm_backward(
        d_out,
        &c.xhat2,
        &c.inv_std2,
        &lp.ln2_gain,
        grads.as_deref_mut().map(|g| (&mut g.ln2_gain, &mut g.ln2_bias)),
    );
    let d_act = dr2.dot(&lp.w2.t());
    let mut d_pre = d_act;
    d_pre.zip_mut_with(&c.pre_act, |v, &x| *v *= gelu_grad(x));
    if let Some(g) = grads.as_deref_mut() {
        g.w2 += &c.act.t().dot(&dr2);
        g.b2 += &dr2.sum_axis(Axis(0));
        g.w1 += &c.y.t().dot(&d_pre);
        g.b1 += &d_pre.sum_axis(Axis(0));
    }
    let dy = &dr2 + &d_pre.dot(&lp.w1.t());

    let dr1 = layer_norm_backward(
        &dy,
        &c.xhat1,
        &c.inv_std1,
        &lp.ln1_gain,
        grads.as_deref_mut().map(|g| (&mut g.ln1_gain, &mut g.ln1_bias)),
    );
    if let Some(g) = grads.as_deref_mut() {
        g.wo += &c.concat.t().dot(&dr1);
        g.bo += &dr1.sum_axis(Axis(0));
    }
    let d_concat = dr1.dot(&lp.wo.t());

    let mut dq = Array2::<f64>::zeros((len, d));
    let mut dk = Array2::<f64>::zeros((len, d));
    let mut dv = Array2::<f64>::zeros((len, d));
    for h in 0..n_heads {
        let cols = h * dh..(h + 1) * dh;
        let a = c.attn[h].slice(s![.., ..n_real]);
        let qh = c.q.slice(s![.., cols.clone()]);
        let kh = c.k.slice(s![..n_real, cols.clone()]);
        let vh = c.v.slice(s![..n_real, cols.clone()]);
        let d_oh = d_concat.slice(s![.., cols.clone()]);

        let da = d_oh.dot(&vh.t());
        dv.slice_mut(s![..n_real, cols.clone()]).assign(&a.t().dot(&d_oh));
        let mut ds = &a * &da;
        for (mut row, arow) in ds.outer_iter_mut().zip(a.outer_iter()) {
            let total = row.sum();
            row.zip_mut_with(&arow, |v, &p| *v = (*v - p * total) * scale);
        }
        dq.slice_mut(s![.., cols.clone()]).assign(&ds.dot(&kh));
        dk.slice_mut(s![..n_real, cols]).assign(&ds.t().dot(&qh));
    }
    if let Some(g) = grads.as_deref_mut() {
        let xt = c.x_in.t();
        g.wq += &xt.dot(&dq);
        g.bq += &dq.sum_axis(Axis(0));
        g.wk += &xt.dot(&dk);
        g.bk += &dk.sum_axis(Axis(0));
        g.wv += &xt.dot(&dv);
        g.bv += &dv.sum_axis(Axis(0));
    }
    dr1 + dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t())
}

/// Add `scale * d(-ln p[label]) / d(params)` into `grads` and return the
/// floored cross-entropy of this sample. Blocks with index below
/// `frozen_layers` receive no parameter gradient.
pub(crate) fn accumulate_gradients(
    params: &ModelParams,
    seq: &TokenSequence,
    label: usize,
    scale: f64,
    frozen_layers: usize,
    grads: &mut ModelParams,
) -> Result<f64> {
    check_sequence(params, seq)?;
    let n_real = seq.n_real;
    let n_heads = params.config.n_heads;

    let mut caches: Vec<LayerCache> = Vec::with_capacity(params.layers.len());
    let mut x = embed(params, seq);
    for lp in &params.layers {
        let cache = layer_forward(lp, n_heads, x, n_real);
        x = cache.out.clone();
        caches.push(cache);
    }
    let pool = pooled(&x, n_real);
    let probs = softmax(&head_logits(params, pool.view()));
    let p = probs[label];
    let loss = -p.max(PROB_FLOOR).ln();
    if p < PROB_FLOOR {
        // floored region: the loss is locally constant
        return Ok(loss);
    }

    let mut dlogits = Array1::from(probs);
    dlogits[label] -= 1.0;
    dlogits *= scale;
    grads
        .head_w
        .scaled_add(1.0, &pool.view().insert_axis(Axis(1)).dot(&dlogits.view().insert_axis(Axis(0))));
    grads.head_b += &dlogits;
    let d_pool = params.head_w.dot(&dlogits) / n_real as f64;

    let mut dx = Array2::<f64>::zeros(x.raw_dim());
    for mut row in dx.outer_iter_mut().take(n_real) {
        row.assign(&d_pool);
    }
    for (l, (lp, cache)) in params.layers.iter().zip(&caches).enumerate().rev() {
        let g = if l < frozen_layers {
            None
        } else {
            Some(&mut grads.layers[l])
        };
        dx = layer_backward(lp, cache, &dx, n_heads, n_real, g);
    }
    for (i, (row, &t)) in dx.outer_iter().zip(&seq.tokens).enumerate() {
        let mut te = grads.tok_emb.row_mut(t as usize);
        te += &row;
        let mut pe = grads.pos_emb.row_mut(i);
        pe += &row;
    }
    Ok(loss)
}

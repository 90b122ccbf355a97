use super::TrainConfig;
use crate::nnmodel::ModelParams;
use crate::{Error, Result};

/// Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Tensors of frozen blocks and their
/// moments are left untouched.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if grads.config != params.config || state.m.config != params.config {
        return Err(Error::ShapeMismatch(
            "gradients or optimizer state built for another model".into(),
        ));
    }
    let frozen = cfg.frozen(params.config.n_layers);
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2, lr, eps) = (cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.eps);

    let grads = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((mut p, g), mut m), mut v) in params.tensors_mut().into_iter().zip(grads).zip(ms).zip(vs) {
        if p.view.shape() != g.view.shape() {
            return Err(Error::ShapeMismatch(format!("tensor {}", p.name)));
        }
        if p.layer.is_some_and(|l| l < frozen) {
            continue;
        }
        for (((pv, &gv), mv), vv) in p
            .view
            .iter_mut()
            .zip(g.view.iter())
            .zip(m.view.iter_mut())
            .zip(v.view.iter_mut())
        {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

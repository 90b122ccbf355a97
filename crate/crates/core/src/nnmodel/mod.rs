//! Transformer encoder classifier over gene tokens.
//!
//! Post-LN encoder blocks (attention, residual, LayerNorm, GELU
//! feed-forward, residual, LayerNorm) on top of learned token and position
//! embeddings. The class is read from the mean of the final hidden states
//! over non-pad positions. Everything is `f64`.

mod backprop;
mod checkpoint;
mod forward;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::seed::rng;
use crate::{Error, Result};

pub(crate) use backprop::accumulate_gradients;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{forward, resume_from, Intervention, Restoration, RunTrace};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub n_classes: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::invalid("n_layers must be at least 1"));
        }
        if self.n_heads == 0 || self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::invalid(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::invalid("d_ff must be positive"));
        }
        if self.max_len < 2 {
            return Err(Error::invalid("max_len must be at least 2"));
        }
        if self.vocab_size < 2 {
            return Err(Error::invalid("vocab_size must cover padding and one gene"));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid("n_classes must be at least 2"));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Weights of one encoder block. Projection matrices are stored
/// input-major, so a row vector `x` maps to `x · w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_gain: Array1<f64>,
    pub ln1_bias: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_gain: Array1<f64>,
    pub ln2_bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// A named parameter tensor; `layer` is the 0-based encoder block that owns
/// it, `None` for embeddings and the head.
pub struct TensorView<'a> {
    pub name: String,
    pub layer: Option<usize>,
    pub view: ArrayViewD<'a, f64>,
}

pub struct TensorViewMut<'a> {
    pub name: String,
    pub layer: Option<usize>,
    pub view: ArrayViewMutD<'a, f64>,
}

impl LayerParams {
    fn zeros(d: usize, d_ff: usize) -> Self {
        let m = || Array2::zeros((d, d));
        let v = || Array1::zeros(d);
        LayerParams {
            wq: m(),
            bq: v(),
            wk: m(),
            bk: v(),
            wv: m(),
            bv: v(),
            wo: m(),
            bo: v(),
            ln1_gain: v(),
            ln1_bias: v(),
            w1: Array2::zeros((d, d_ff)),
            b1: Array1::zeros(d_ff),
            w2: Array2::zeros((d_ff, d)),
            b2: v(),
            ln2_gain: v(),
            ln2_bias: v(),
        }
    }
}

macro_rules! layer_fields {
    ($mac:ident, $l:expr, $out:expr, $i:expr) => {
        $mac!($l, $out, $i, wq, bq, wk, bk, wv, bv, wo, bo, ln1_gain, ln1_bias, w1, b1, w2, b2, ln2_gain, ln2_bias)
    };
}

macro_rules! push_views {
    ($l:expr, $out:expr, $i:expr, $($f:ident),*) => {
        $( $out.push(TensorView { name: format!("layers.{}.{}", $i, stringify!($f)), layer: Some($i), view: $l.$f.view().into_dyn() }); )*
    };
}

macro_rules! push_views_mut {
    ($l:expr, $out:expr, $i:expr, $($f:ident),*) => {{
        let LayerParams { $($f),* } = $l;
        $( $out.push(TensorViewMut { name: format!("layers.{}.{}", $i, stringify!($f)), layer: Some($i), view: $f.view_mut().into_dyn() }); )*
    }};
}

impl ModelParams {
    /// All-zero parameters with the shapes of `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        ModelParams {
            config: config.clone(),
            tok_emb: Array2::zeros((config.vocab_size, d)),
            pos_emb: Array2::zeros((config.max_len, d)),
            layers: (0..config.n_layers)
                .map(|_| LayerParams::zeros(d, config.d_ff))
                .collect(),
            head_w: Array2::zeros((d, config.n_classes)),
            head_b: Array1::zeros(config.n_classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Tensors in canonical order: embeddings, blocks bottom-up, head.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        let mut out = vec![
            TensorView {
                name: "tok_emb".into(),
                layer: None,
                view: self.tok_emb.view().into_dyn(),
            },
            TensorView {
                name: "pos_emb".into(),
                layer: None,
                view: self.pos_emb.view().into_dyn(),
            },
        ];
        for (i, l) in self.layers.iter().enumerate() {
            layer_fields!(push_views, l, out, i);
        }
        out.push(TensorView {
            name: "head_w".into(),
            layer: None,
            view: self.head_w.view().into_dyn(),
        });
        out.push(TensorView {
            name: "head_b".into(),
            layer: None,
            view: self.head_b.view().into_dyn(),
        });
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorViewMut<'_>> {
        let ModelParams {
            tok_emb,
            pos_emb,
            layers,
            head_w,
            head_b,
            ..
        } = self;
        let mut out = vec![
            TensorViewMut {
                name: "tok_emb".into(),
                layer: None,
                view: tok_emb.view_mut().into_dyn(),
            },
            TensorViewMut {
                name: "pos_emb".into(),
                layer: None,
                view: pos_emb.view_mut().into_dyn(),
            },
        ];
        for (i, l) in layers.iter_mut().enumerate() {
            layer_fields!(push_views_mut, l, out, i);
        }
        out.push(TensorViewMut {
            name: "head_w".into(),
            layer: None,
            view: head_w.view_mut().into_dyn(),
        });
        out.push(TensorViewMut {
            name: "head_b".into(),
            layer: None,
            view: head_b.view_mut().into_dyn(),
        });
        out
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.view.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.view.iter().all(|v| v.is_finite()))
    }

    /// Elementwise `self += alpha * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, alpha: f64) {
        for (mut a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.view.scaled_add(alpha, &b.view);
        }
    }
}

fn is_gain(name: &str) -> bool {
    name.ends_with("_gain")
}

fn is_bias(name: &str) -> bool {
    let field = name.rsplit('.').next().unwrap_or(name);
    field.ends_with("_bias") || field == "head_b" || (field.len() == 2 && field.starts_with('b'))
}

/// Fresh parameters: weights uniform in `±1/sqrt(d_model)` under
/// `config.init_seed`, biases zero, LayerNorm gains one.
pub fn init_model(config: &ModelConfig) -> Result<ModelParams> {
    config.validate()?;
    let mut params = ModelParams::zeros(config);
    let bound = 1.0 / (config.d_model as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).map_err(|e| Error::invalid(e.to_string()))?;
    let mut r = rng(config.init_seed);
    for mut t in params.tensors_mut() {
        if is_gain(&t.name) {
            t.view.fill(1.0);
        } else if is_bias(&t.name) {
            t.view.fill(0.0);
        } else {
            t.view.iter_mut().for_each(|v| *v = dist.sample(&mut r));
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 8,
            d_ff: 12,
            vocab_size: 20,
            max_len: 6,
            n_classes: 2,
            init_seed: 5,
        }
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let a = init_model(&tiny_config()).unwrap();
        let b = init_model(&tiny_config()).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        let bound = 1.0 / 8f64.sqrt();
        assert!(a.tok_emb.iter().all(|v| v.abs() <= bound));
        assert!(a.tok_emb.iter().any(|&v| v != 0.0));
        assert!(a.layers[0].bq.iter().all(|&v| v == 0.0));
        assert!(a.layers[1].ln2_gain.iter().all(|&v| v == 1.0));
        assert!(a.head_b.iter().all(|&v| v == 0.0));
        let c = init_model(&ModelConfig {
            init_seed: 6,
            ..tiny_config()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs() {
        let bad = ModelConfig {
            d_model: 8,
            n_heads: 3,
            ..tiny_config()
        };
        assert!(init_model(&bad).is_err());
        assert!(init_model(&ModelConfig {
            n_layers: 0,
            ..tiny_config()
        })
        .is_err());
        assert!(init_model(&ModelConfig {
            max_len: 1,
            ..tiny_config()
        })
        .is_err());
    }

    #[test]
    fn tensor_listing_is_complete() {
        let p = init_model(&tiny_config()).unwrap();
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        assert_eq!(names.len(), 2 + 2 * 16 + 2);
        assert_eq!(names[2], "layers.0.wq");
        assert_eq!(names.last().unwrap(), "head_b");
        let d = 8;
        let per_layer = 4 * d * d + 4 * d + 4 * d + d * 12 + 12 + 12 * d + d;
        assert_eq!(p.n_parameters(), 20 * d + 6 * d + 2 * per_layer + d * 2 + 2);
    }
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rgf_core::backtrack::{BacktrackConfig, BacktrackMode, HeadMode};
use rgf_core::corpus::QcThresholds;
use rgf_core::nnmodel::ModelConfig;
use rgf_core::seed::derive_seed;
use rgf_core::trace::{IeSign, TraceConfig};
use rgf_core::train::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    /// Genes corrupted during tracing; the ten AlzGene genes when unset.
    pub known_genes: Option<PathBuf>,
    pub gmt: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            n_layers: 4,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_len: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub frozen_layers: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Extra learning rates tried alongside `learning_rate`.
    pub grid_learning_rates: Vec<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            frozen_layers: t.frozen_layers,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            grid_learning_rates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub k: usize,
    pub val_fraction: f64,
    /// Test fold whose model and test split are used for tracing.
    pub trace_fold: usize,
    /// Evaluate only the first this many test folds (always including
    /// `trace_fold`); all folds when unset.
    pub folds_to_run: Option<usize>,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            k: 5,
            val_fraction: 0.2,
            trace_fold: 0,
            folds_to_run: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSection {
    pub sigma: f64,
    pub percentile: f64,
    pub sample_limit: Option<usize>,
    pub ie_sign: IeSign,
}

impl Default for TraceSection {
    fn default() -> Self {
        let t = TraceConfig::default();
        TraceSection {
            sigma: t.sigma,
            percentile: t.percentile,
            sample_limit: t.sample_limit,
            ie_sign: t.ie_sign,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktrackSection {
    pub mode: BacktrackMode,
    pub head_mode: HeadMode,
    pub top_k: usize,
    pub exclude_known: bool,
}

impl Default for BacktrackSection {
    fn default() -> Self {
        BacktrackSection {
            mode: BacktrackMode::Strict,
            head_mode: HeadMode::Mean,
            top_k: 10,
            exclude_known: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichSection {
    pub alpha: f64,
}

impl Default for EnrichSection {
    fn default() -> Self {
        EnrichSection { alpha: 0.05 }
    }
}

/// Everything a pipeline run depends on. Stage seeds are derived from
/// `seed` and the stage name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub qc: QcThresholds,
    pub model: ModelSection,
    pub train: TrainSection,
    pub cv: CvSection,
    pub trace: TraceSection,
    pub backtrack: BacktrackSection,
    pub enrich: EnrichSection,
}

impl PipelineConfig {
    /// Read a TOML file; relative paths are taken relative to its directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.dataset,
            &mut cfg.paths.known_genes,
            &mut cfg.paths.gmt,
            &mut cfg.paths.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.model.n_layers,
            n_heads: self.model.n_heads,
            d_model: self.model.d_model,
            d_ff: self.model.d_ff,
            vocab_size,
            max_len: self.model.max_len,
            n_classes: 2,
            init_seed: self.stage_seed("init"),
        }
    }

    pub fn train_configs(&self) -> Vec<TrainConfig> {
        let t = &self.train;
        let base = TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            batch_size: t.batch_size,
            frozen_layers: t.frozen_layers,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            seed: self.stage_seed("train"),
        };
        let mut out = vec![base.clone()];
        for &lr in &t.grid_learning_rates {
            if lr != base.learning_rate {
                out.push(TrainConfig {
                    learning_rate: lr,
                    ..base.clone()
                });
            }
        }
        out
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            sigma: self.trace.sigma,
            percentile: self.trace.percentile,
            sample_limit: self.trace.sample_limit,
            seed: self.stage_seed("trace"),
            ie_sign: self.trace.ie_sign,
        }
    }

    pub fn backtrack_config(&self) -> BacktrackConfig {
        BacktrackConfig {
            mode: self.backtrack.mode,
            head_mode: self.backtrack.head_mode,
        }
    }

    /// Test folds evaluated by cross-validation.
    pub fn test_folds(&self) -> Vec<usize> {
        let k = self.cv.k;
        let n = self.cv.folds_to_run.unwrap_or(k).clamp(1, k);
        let mut folds: Vec<usize> = (0..n).collect();
        if !folds.contains(&self.cv.trace_fold) {
            folds.push(self.cv.trace_fold);
        }
        folds
    }

    pub fn validate(&self) -> Result<()> {
        if self.cv.k < 2 {
            bail!("cv.k must be at least 2");
        }
        if self.cv.trace_fold >= self.cv.k {
            bail!("cv.trace_fold must be below cv.k");
        }
        if !(self.cv.val_fraction > 0.0 && self.cv.val_fraction < 1.0) {
            bail!("cv.val_fraction must lie strictly between 0 and 1");
        }
        if self.backtrack.top_k == 0 {
            bail!("backtrack.top_k must be at least 1");
        }
        if !(self.enrich.alpha > 0.0 && self.enrich.alpha <= 1.0) {
            bail!("enrich.alpha must lie in (0, 1]");
        }
        self.trace_config().validate()?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.paths
            .dataset
            .as_deref()
            .context("no dataset given (paths.dataset)")
    }
}

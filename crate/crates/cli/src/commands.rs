use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use rgf_core::backtrack::{format_mcgs, score_tokens, top_mcgs, GeneScore, GeneScoreReport};
use rgf_core::corpus::{generate_synthetic, write_dataset, write_known_genes, GeneVocabulary, SyntheticSpec};
use rgf_core::enrich::{load_gmt, enrich, EnrichmentResult};
use rgf_core::nnmodel::{load_checkpoint, save_checkpoint, ModelParams};
use rgf_core::trace::{build_ie_grid, select_mcns, IEGrid, McnSet};
use rgf_core::train::{cross_validate_folds, MetricsReport};

use crate::config::PipelineConfig;
use crate::data::{folds_seed, known_genes, prepare, require_dir, trace_trial, traced_samples, Prepared};
use crate::heatmap::render_heatmap;

pub const DATASET_FILE: &str = "dataset.tsv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const KNOWN_GENES_FILE: &str = "known_genes.txt";
pub const CHECKPOINT_FILE: &str = "model.rgfm";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const METRICS_FILE: &str = "metrics.json";
pub const IE_GRID_FILE: &str = "ie_grid.csv";
pub const MCNS_FILE: &str = "mcns.csv";
pub const HEATMAP_FILE: &str = "heatmap.svg";
pub const GENE_SCORES_FILE: &str = "gene_scores.csv";
pub const MCGS_FILE: &str = "mcgs.txt";
pub const ENRICHMENT_FILE: &str = "enrichment.csv";

/// Synthetic corpus description. Planted and known genes are drawn at
/// random unless listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpecFile {
    pub n_cells: usize,
    pub n_genes: usize,
    pub n_planted: usize,
    pub n_known: usize,
    pub effect_size: f64,
    pub base_mean: f64,
    pub dispersion: f64,
    pub seed: u64,
    pub planted_genes: Option<Vec<String>>,
    pub designated_known: Option<Vec<String>>,
}

impl Default for SynthSpecFile {
    fn default() -> Self {
        SynthSpecFile {
            n_cells: 2000,
            n_genes: 500,
            n_planted: 8,
            n_known: 4,
            effect_size: 3.0,
            base_mean: 20.0,
            dispersion: 5.0,
            seed: 0,
            planted_genes: None,
            designated_known: None,
        }
    }
}

impl SynthSpecFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_spec(&self) -> Result<SyntheticSpec> {
        let mut spec = SyntheticSpec::with_random_planted(
            self.n_cells,
            self.n_genes,
            self.n_planted,
            self.n_known,
            self.effect_size,
            self.seed,
        )?;
        spec.base_mean = self.base_mean;
        spec.dispersion = self.dispersion;
        if let Some(p) = &self.planted_genes {
            spec.planted_genes = p.clone();
        }
        if let Some(k) = &self.designated_known {
            spec.designated_known = k.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Write `dataset.tsv`, `ground_truth.json` and `known_genes.txt`.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    require_dir(out)?;
    let (cells, truth) = generate_synthetic(spec)?;
    write_dataset(&cells, &out.join(DATASET_FILE))?;
    write_file(&out.join(GROUND_TRUTH_FILE), &to_json(&truth)?)?;
    write_known_genes(&truth.designated_known, &out.join(KNOWN_GENES_FILE))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct MetricsFile<'a> {
    kept_cells: usize,
    rejected_cells: usize,
    trace_fold: usize,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Cross-validate over `folds`, then save the tracing fold's model, the
/// vocabulary and `metrics.json`.
fn train_and_report(cfg: &PipelineConfig, out: &Path, folds: &[usize]) -> Result<(Prepared, ModelParams, MetricsReport)> {
    cfg.validate()?;
    require_dir(out)?;
    let data = prepare(cfg, None)?;
    let outcome = cross_validate_folds(
        &data.seqs,
        &data.labels,
        cfg.cv.k,
        cfg.cv.val_fraction,
        &cfg.model_config(data.vocab.vocab_size()),
        &cfg.train_configs(),
        folds_seed(cfg),
        folds,
    )?;
    let at = outcome
        .report
        .folds
        .iter()
        .position(|f| f.test_fold == cfg.cv.trace_fold)
        .context("tracing fold was not trained")?;
    let model = outcome.models[at].clone();
    save_checkpoint(&model, &out.join(CHECKPOINT_FILE))?;
    data.vocab.write(&out.join(VOCAB_FILE))?;
    let file = MetricsFile {
        kept_cells: data.seqs.len(),
        rejected_cells: data.n_rejected,
        trace_fold: cfg.cv.trace_fold,
        report: &outcome.report,
    };
    write_file(&out.join(METRICS_FILE), &to_json(&file)?)?;
    Ok((data, model, outcome.report))
}

/// Train on the tracing fold only.
pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<MetricsReport> {
    Ok(train_and_report(cfg, out, &[cfg.cv.trace_fold])?.2)
}

/// Cross-validate over the configured folds.
pub fn cmd_cv(cfg: &PipelineConfig, out: &Path) -> Result<MetricsReport> {
    Ok(train_and_report(cfg, out, &cfg.test_folds())?.2)
}

/// Checkpoint plus the vocabulary stored beside it.
pub fn load_model(checkpoint: &Path) -> Result<(ModelParams, GeneVocabulary)> {
    let params = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let vocab_path = checkpoint.with_file_name(VOCAB_FILE);
    let vocab = GeneVocabulary::read(&vocab_path).with_context(|| format!("loading {}", vocab_path.display()))?;
    if vocab.vocab_size() != params.config.vocab_size {
        bail!("vocabulary does not match the checkpoint");
    }
    Ok((params, vocab))
}

fn check_model_matches(cfg: &PipelineConfig, params: &ModelParams) -> Result<()> {
    if params.config.max_len != cfg.model.max_len {
        bail!(
            "checkpoint max_len {} differs from config max_len {}",
            params.config.max_len,
            cfg.model.max_len
        );
    }
    Ok(())
}

pub struct TraceOutput {
    pub grid: IEGrid,
    pub mcns: McnSet,
}

fn trace_stage(cfg: &PipelineConfig, params: &ModelParams, data: &Prepared, out: &Path) -> Result<TraceOutput> {
    let trial = trace_trial(cfg, data)?;
    let known = known_genes(cfg)?;
    let (samples, ids) = traced_samples(cfg, data, &trial, &known);
    if samples.is_empty() {
        bail!("no test sample of fold {} contains a known gene", cfg.cv.trace_fold);
    }
    let grid = build_ie_grid(params, &samples, &ids, &cfg.trace_config())?;
    let mcns = select_mcns(&grid, cfg.trace.percentile)?;
    grid.write_csv(&out.join(IE_GRID_FILE))?;
    mcns.write_csv(&out.join(MCNS_FILE))?;
    write_file(&out.join(HEATMAP_FILE), &render_heatmap(&grid, &mcns)?)?;
    Ok(TraceOutput { grid, mcns })
}

/// Trace the tracing fold's test split: `ie_grid.csv`, `mcns.csv`,
/// `heatmap.svg`.
pub fn cmd_trace(cfg: &PipelineConfig, checkpoint: &Path, out: &Path) -> Result<TraceOutput> {
    cfg.validate()?;
    require_dir(out)?;
    let (params, vocab) = load_model(checkpoint)?;
    check_model_matches(cfg, &params)?;
    let data = prepare(cfg, Some(vocab))?;
    trace_stage(cfg, &params, &data, out)
}

fn backtrack_stage(
    cfg: &PipelineConfig,
    params: &ModelParams,
    data: &Prepared,
    mcns: &McnSet,
    out: &Path,
) -> Result<(GeneScoreReport, Vec<GeneScore>)> {
    let trial = trace_trial(cfg, data)?;
    let known = known_genes(cfg)?;
    let (samples, _) = traced_samples(cfg, data, &trial, &known);
    if samples.is_empty() {
        bail!("no test sample of fold {} contains a known gene", cfg.cv.trace_fold);
    }
    let report = score_tokens(params, &data.vocab, &samples, mcns, &cfg.backtrack_config())?;
    let known: BTreeSet<String> = known.into_iter().collect();
    let top = top_mcgs(&report, cfg.backtrack.top_k, cfg.backtrack.exclude_known, &known)?;
    report.write_csv(&out.join(GENE_SCORES_FILE))?;
    write_file(&out.join(MCGS_FILE), &format_mcgs(&top))?;
    Ok((report, top))
}

/// Score gene tokens by backtracking from the MCNs in `mcns_path`:
/// `gene_scores.csv`, `mcgs.txt`.
pub fn cmd_backtrack(cfg: &PipelineConfig, checkpoint: &Path, mcns_path: &Path, out: &Path) -> Result<Vec<GeneScore>> {
    cfg.validate()?;
    require_dir(out)?;
    let (params, vocab) = load_model(checkpoint)?;
    check_model_matches(cfg, &params)?;
    let mcns = McnSet::read_csv(mcns_path).with_context(|| format!("loading {}", mcns_path.display()))?;
    let data = prepare(cfg, Some(vocab))?;
    Ok(backtrack_stage(cfg, &params, &data, &mcns, out)?.1)
}

/// Gene symbols of an `mcgs.txt` file.
pub fn read_mcgs(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, l)| match l.rsplit_once(" (") {
            Some((gene, _)) if !gene.trim().is_empty() => Ok(gene.trim().to_string()),
            _ => bail!("{}: line {}: expected `SYMBOL (score)`", path.display(), n + 1),
        })
        .collect()
}

fn enrich_stage(genes: &[String], gmt: &Path, background: Option<&GeneVocabulary>, alpha: f64, out: &Path) -> Result<EnrichmentResult> {
    let mut sets = load_gmt(gmt).with_context(|| format!("loading {}", gmt.display()))?;
    if let Some(v) = background {
        sets = sets.restrict_to(v.symbols().map(str::to_string).collect());
    }
    let result = enrich(genes, &sets, alpha)?;
    result.write_csv(&out.join(ENRICHMENT_FILE))?;
    Ok(result)
}

/// Test the genes of `mcgs` for over-representation in the sets of `gmt`.
/// The background is the vocabulary when one is given, otherwise the
/// union of all sets.
pub fn cmd_enrich(mcgs: &Path, gmt: &Path, vocab: Option<&Path>, alpha: f64, out: &Path) -> Result<EnrichmentResult> {
    require_dir(out)?;
    let genes = read_mcgs(mcgs)?;
    let vocab = match vocab {
        Some(p) => Some(GeneVocabulary::read(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    enrich_stage(&genes, gmt, vocab.as_ref(), alpha, out)
}

pub struct PipelineOutput {
    pub metrics: MetricsReport,
    pub trace: TraceOutput,
    pub gene_scores: GeneScoreReport,
    pub mcgs: Vec<GeneScore>,
    pub enrichment: Option<EnrichmentResult>,
    pub artifacts: Vec<PathBuf>,
}

/// Cross-validation, tracing, backtracking and, given a GMT file,
/// enrichment, all from one config.
pub fn cmd_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<PipelineOutput> {
    let (data, model, metrics) = train_and_report(cfg, out, &cfg.test_folds())?;
    let trace = trace_stage(cfg, &model, &data, out)?;
    let (gene_scores, mcgs) = backtrack_stage(cfg, &model, &data, &trace.mcns, out)?;
    let mut names = vec![
        METRICS_FILE,
        IE_GRID_FILE,
        MCNS_FILE,
        HEATMAP_FILE,
        GENE_SCORES_FILE,
        MCGS_FILE,
        CHECKPOINT_FILE,
        VOCAB_FILE,
    ];
    let enrichment = match &cfg.paths.gmt {
        Some(gmt) => {
            let genes: Vec<String> = mcgs.iter().map(|g| g.gene.clone()).collect();
            names.push(ENRICHMENT_FILE);
            Some(enrich_stage(&genes, gmt, Some(&data.vocab), cfg.enrich.alpha, out)?)
        }
        None => None,
    };
    Ok(PipelineOutput {
        metrics,
        trace,
        gene_scores,
        mcgs,
        enrichment,
        artifacts: names.into_iter().map(|n| out.join(n)).collect(),
    })
}

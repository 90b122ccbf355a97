use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};

use rgf_core::corpus::{
    build_vocabulary, make_trial, qc_filter, read_dataset, read_known_genes, stratified_kfold,
    tokenize, GeneVocabulary, Label, TokenSequence, Trial, ALZGENE_TOP10,
};
use rgf_core::trace::{known_positions, known_tokens};

use crate::config::PipelineConfig;

/// QC-filtered, tokenized corpus.
pub struct Prepared {
    pub vocab: GeneVocabulary,
    pub cell_ids: Vec<String>,
    pub seqs: Vec<TokenSequence>,
    pub labels: Vec<Label>,
    pub n_rejected: usize,
}

/// Load the dataset, apply QC and tokenize. Without a vocabulary one is
/// built from the genes of the kept cells.
pub fn prepare(cfg: &PipelineConfig, vocab: Option<GeneVocabulary>) -> Result<Prepared> {
    let path = cfg.dataset()?;
    let cells = read_dataset(path).with_context(|| format!("loading {}", path.display()))?;
    let qc = qc_filter(cells, &cfg.qc);
    if qc.kept.is_empty() {
        anyhow::bail!("no cell passed quality control");
    }
    let vocab = match vocab {
        Some(v) => v,
        None => {
            let genes: BTreeSet<&String> = qc.kept.iter().flat_map(|c| c.expression.keys()).collect();
            build_vocabulary(genes.into_iter().cloned())?
        }
    };
    let seqs = qc
        .kept
        .iter()
        .map(|c| tokenize(c, &vocab, cfg.model.max_len))
        .collect::<rgf_core::Result<Vec<_>>>()?;
    Ok(Prepared {
        labels: qc.kept.iter().map(|c| c.label).collect(),
        cell_ids: qc.kept.iter().map(|c| c.cell_id.clone()).collect(),
        seqs,
        vocab,
        n_rejected: qc.rejected.len(),
    })
}

pub fn known_genes(cfg: &PipelineConfig) -> Result<Vec<String>> {
    match &cfg.paths.known_genes {
        Some(p) => Ok(read_known_genes(p).with_context(|| format!("loading {}", p.display()))?),
        None => Ok(ALZGENE_TOP10.iter().map(|s| s.to_string()).collect()),
    }
}

pub fn folds_seed(cfg: &PipelineConfig) -> u64 {
    cfg.stage_seed("folds")
}

/// The train/validation/test split of the tracing fold.
pub fn trace_trial(cfg: &PipelineConfig, data: &Prepared) -> Result<Trial> {
    let seed = folds_seed(cfg);
    let folds = stratified_kfold(&data.labels, cfg.cv.k, seed)?;
    Ok(make_trial(&folds, &data.labels, cfg.cv.trace_fold, cfg.cv.val_fraction, seed)?)
}

/// Test-split samples with at least one known-gene token, in split order,
/// capped at the configured sample limit.
pub fn traced_samples(
    cfg: &PipelineConfig,
    data: &Prepared,
    trial: &Trial,
    known: &[String],
) -> (Vec<TokenSequence>, BTreeSet<u32>) {
    let (ids, _) = known_tokens(&data.vocab, known);
    let limit = cfg.trace.sample_limit.unwrap_or(usize::MAX);
    let samples = trial
        .test
        .iter()
        .map(|&i| &data.seqs[i])
        .filter(|s| !known_positions(s, &ids).is_empty())
        .take(limit)
        .cloned()
        .collect();
    (samples, ids)
}

pub fn require_dir(out: &Path) -> Result<()> {
    if !out.is_dir() {
        anyhow::bail!("output directory {} does not exist", out.display());
    }
    Ok(())
}

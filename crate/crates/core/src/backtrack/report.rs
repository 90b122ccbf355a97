use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{attention_to_weights, backtrack_sample, BacktrackConfig};
use crate::corpus::{GeneVocabulary, TokenSequence};
use crate::nnmodel::{forward, ModelParams};
use crate::trace::{sorted_sum, McnSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneScore {
    pub gene: String,
    pub mean_score: f64,
    pub count: usize,
}

/// Genes ranked by mean token score, highest first, ties by symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneScoreReport {
    pub ranking: Vec<GeneScore>,
    pub n_samples: usize,
}

impl GeneScoreReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,gene,mean_score,count\n");
        for (r, g) in self.ranking.iter().enumerate() {
            writeln!(out, "{},{},{},{}", r + 1, g.gene, g.mean_score, g.count).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Backtrack every sample from its clean-run attention and average the
/// first-layer score of each gene over all its occurrences.
pub fn score_tokens(
    params: &ModelParams,
    vocab: &GeneVocabulary,
    samples: &[TokenSequence],
    mcns: &McnSet,
    cfg: &BacktrackConfig,
) -> Result<GeneScoreReport> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to score"));
    }
    let per_sample: Vec<Vec<f64>> = samples
        .par_iter()
        .map(|s| {
            let trace = forward(params, s, None)?;
            let w = attention_to_weights(&trace, cfg.head_mode)?;
            Ok(backtrack_sample(&w, mcns, cfg.mode)?.s.swap_remove(0))
        })
        .collect::<Result<_>>()?;
    aggregate(vocab, samples, &per_sample)
}

/// Per-gene mean of per-position scores; summation is sorted so the
/// result is independent of sample order.
pub(crate) fn aggregate(
    vocab: &GeneVocabulary,
    samples: &[TokenSequence],
    per_sample: &[Vec<f64>],
) -> Result<GeneScoreReport> {
    let mut by_token: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (s, scores) in samples.iter().zip(per_sample) {
        for (&t, &v) in s.real_tokens().iter().zip(scores) {
            by_token.entry(t).or_default().push(v);
        }
    }
    let mut ranking = Vec::with_capacity(by_token.len());
    for (t, mut values) in by_token {
        let gene = vocab
            .symbol(t)
            .ok_or(Error::TokenOutOfRange { id: t, vocab_size: vocab.vocab_size() })?
            .to_string();
        let count = values.len();
        ranking.push(GeneScore {
            gene,
            mean_score: sorted_sum(&mut values) / count as f64,
            count,
        });
    }
    ranking.sort_by(|a, b| b.mean_score.total_cmp(&a.mean_score).then_with(|| a.gene.cmp(&b.gene)));
    Ok(GeneScoreReport {
        ranking,
        n_samples: samples.len(),
    })
}

/// The `k` best-ranked genes, optionally leaving out `known` genes.
pub fn top_mcgs(
    report: &GeneScoreReport,
    k: usize,
    exclude_known: bool,
    known: &BTreeSet<String>,
) -> Result<Vec<GeneScore>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    Ok(report
        .ranking
        .iter()
        .filter(|g| !(exclude_known && known.contains(&g.gene)))
        .take(k)
        .cloned()
        .collect())
}

/// One `SYMBOL (0.499)` line per gene.
pub fn format_mcgs(genes: &[GeneScore]) -> String {
    let mut out = String::new();
    for g in genes {
        writeln!(out, "{} ({:.3})", g.gene, g.mean_score).unwrap();
    }
    out
}

//! Synthetic single-cell counts with planted label-associated genes.
//!
//! Counts are negative-binomial, drawn as a Gamma-Poisson mixture with mean
//! `base_mean` and shape `dispersion`. In label-1 cells the mean of every
//! planted gene is multiplied by `effect_size`.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::{CellRecord, Label};
use crate::seed::{derive_seed, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_cells: usize,
    pub n_genes: usize,
    pub planted_genes: Vec<String>,
    pub designated_known: Vec<String>,
    pub effect_size: f64,
    pub base_mean: f64,
    pub dispersion: f64,
    pub seed: u64,
}

/// Which genes carry the planted signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub planted_genes: Vec<String>,
    pub designated_known: Vec<String>,
    /// Planted genes that are not designated known.
    pub unmasked: Vec<String>,
    pub effect_size: f64,
}

/// Symbol of the `index`-th (0-based) gene of the synthetic universe.
pub fn synthetic_gene_symbol(index: usize) -> String {
    format!("GENE{:04}", index + 1)
}

impl SyntheticSpec {
    /// A spec whose planted and known genes are drawn from the universe
    /// under `seed`.
    pub fn with_random_planted(
        n_cells: usize,
        n_genes: usize,
        n_planted: usize,
        n_known: usize,
        effect_size: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_planted > n_genes || n_known > n_planted {
            return Err(Error::invalid("need n_known <= n_planted <= n_genes"));
        }
        let mut r = rng(derive_seed(seed, "synthetic:planted"));
        let mut picked: Vec<usize> = sample(&mut r, n_genes, n_planted).into_vec();
        let mut known: Vec<String> = picked[..n_known]
            .iter()
            .map(|&i| synthetic_gene_symbol(i))
            .collect();
        known.sort();
        picked.sort_unstable();
        Ok(SyntheticSpec {
            n_cells,
            n_genes,
            planted_genes: picked.into_iter().map(synthetic_gene_symbol).collect(),
            designated_known: known,
            effect_size,
            base_mean: 20.0,
            dispersion: 5.0,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_cells < 2 {
            return Err(Error::invalid("n_cells must be at least 2"));
        }
        if self.n_genes == 0 || self.n_genes < self.planted_genes.len() {
            return Err(Error::invalid("n_genes must cover the planted genes"));
        }
        if !(self.effect_size >= 1.0) || !self.effect_size.is_finite() {
            return Err(Error::invalid("effect_size must be >= 1"));
        }
        if !(self.base_mean > 0.0) || !(self.dispersion > 0.0) {
            return Err(Error::invalid("base_mean and dispersion must be positive"));
        }
        let universe: BTreeSet<String> = (0..self.n_genes).map(synthetic_gene_symbol).collect();
        let planted: BTreeSet<&String> = self.planted_genes.iter().collect();
        if planted.len() != self.planted_genes.len() {
            return Err(Error::invalid("planted genes must be unique"));
        }
        if let Some(g) = self.planted_genes.iter().find(|g| !universe.contains(*g)) {
            return Err(Error::invalid(format!("planted gene {g} is not in the universe")));
        }
        if let Some(g) = self.designated_known.iter().find(|g| !planted.contains(g)) {
            return Err(Error::invalid(format!("known gene {g} is not planted")));
        }
        Ok(())
    }
}

/// Generate cells and their ground truth. A pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Vec<CellRecord>, GroundTruth)> {
    spec.validate()?;
    let symbols: Vec<String> = (0..spec.n_genes).map(synthetic_gene_symbol).collect();
    let planted: BTreeSet<&str> = spec.planted_genes.iter().map(String::as_str).collect();
    let is_planted: Vec<bool> = symbols.iter().map(|s| planted.contains(s.as_str())).collect();

    let scale = spec.base_mean / spec.dispersion;
    let base = Gamma::new(spec.dispersion, scale).map_err(|e| Error::invalid(e.to_string()))?;
    let boosted = Gamma::new(spec.dispersion, scale * spec.effect_size)
        .map_err(|e| Error::invalid(e.to_string()))?;

    let mut r = rng(derive_seed(spec.seed, "synthetic:counts"));
    let mut cells = Vec::with_capacity(spec.n_cells);
    for i in 0..spec.n_cells {
        let label = if i % 2 == 1 { Label::EarlyAd } else { Label::NonAd };
        let mut expression = BTreeMap::new();
        // an all-zero cell is redrawn; with realistic specs this never loops
        while expression.is_empty() {
            for (g, sym) in symbols.iter().enumerate() {
                let gamma = if label.is_positive() && is_planted[g] {
                    &boosted
                } else {
                    &base
                };
                let lambda: f64 = gamma.sample(&mut r);
                let count = if lambda > 0.0 {
                    Poisson::new(lambda)
                        .map(|p| p.sample(&mut r))
                        .unwrap_or(0.0)
                } else {
                    0.0
                };
                if count > 0.0 {
                    expression.insert(sym.clone(), count);
                }
            }
        }
        cells.push(CellRecord {
            cell_id: format!("cell{i:05}"),
            label,
            expression,
        });
    }

    let known: BTreeSet<&String> = spec.designated_known.iter().collect();
    let truth = GroundTruth {
        planted_genes: spec.planted_genes.clone(),
        designated_known: spec.designated_known.clone(),
        unmasked: spec
            .planted_genes
            .iter()
            .filter(|g| !known.contains(g))
            .cloned()
            .collect(),
        effect_size: spec.effect_size,
    };
    Ok((cells, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_cells: usize, effect: f64) -> SyntheticSpec {
        SyntheticSpec {
            n_cells,
            n_genes: 30,
            planted_genes: vec!["GENE0003".into(), "GENE0010".into()],
            designated_known: vec!["GENE0003".into()],
            effect_size: effect,
            base_mean: 20.0,
            dispersion: 5.0,
            seed: 9,
        }
    }

    /// Mean count of `gene` within cells of `label`, zeros included.
    fn class_mean(cells: &[CellRecord], gene: &str, label: Label) -> f64 {
        let sel: Vec<&CellRecord> = cells.iter().filter(|c| c.label == label).collect();
        sel.iter()
            .map(|c| c.expression.get(gene).copied().unwrap_or(0.0))
            .sum::<f64>()
            / sel.len() as f64
    }

    #[test]
    fn deterministic_and_balanced() {
        let (a, ta) = generate_synthetic(&spec(50, 3.0)).unwrap();
        let (b, tb) = generate_synthetic(&spec(50, 3.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        assert_eq!(a.iter().filter(|c| c.label.is_positive()).count(), 25);
        assert_eq!(ta.unmasked, ["GENE0010"]);
    }

    #[test]
    fn planted_mean_ratio_matches_effect() {
        let (cells, _) = generate_synthetic(&SyntheticSpec {
            n_cells: 10_000,
            ..spec(0, 3.0)
        })
        .unwrap();
        for g in ["GENE0003", "GENE0010"] {
            let ratio = class_mean(&cells, g, Label::EarlyAd) / class_mean(&cells, g, Label::NonAd);
            assert!((ratio - 3.0).abs() < 0.15, "{g}: ratio {ratio}");
        }
        // a non-planted gene stays flat
        let flat = class_mean(&cells, "GENE0020", Label::EarlyAd)
            / class_mean(&cells, "GENE0020", Label::NonAd);
        assert!((flat - 1.0).abs() < 0.05, "flat ratio {flat}");
    }

    #[test]
    fn inconsistent_specs_rejected() {
        assert!(generate_synthetic(&spec(10, 0.5)).is_err());
        let mut s = spec(10, 2.0);
        s.designated_known = vec!["GENE0004".into()];
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(10, 2.0);
        s.planted_genes.push("NOPE".into());
        assert!(generate_synthetic(&s).is_err());
        let mut s = spec(10, 2.0);
        s.n_genes = 1;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn random_planted_spec_is_consistent() {
        let s = SyntheticSpec::with_random_planted(100, 500, 8, 4, 3.0, 1).unwrap();
        s.validate().unwrap();
        assert_eq!(s.planted_genes.len(), 8);
        assert_eq!(s.designated_known.len(), 4);
    }
}

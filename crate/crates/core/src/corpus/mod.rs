//! Cells, genes and their token representation.

mod encode;
mod folds;
mod io;
mod qc;
mod synthetic;
mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use encode::{encode_rank_values, tokenize, truncate_and_pad, TokenSequence};
pub use folds::{make_trial, stratified_kfold, FoldAssignment, Trial};
pub use io::{
    parse_dataset, parse_known_genes, read_dataset, read_known_genes, write_dataset,
    write_known_genes,
};
pub use qc::{qc_filter, QcOutcome, QcThresholds, Rejection, RejectReason};
pub use synthetic::{generate_synthetic, synthetic_gene_symbol, GroundTruth, SyntheticSpec};
pub use vocab::{build_vocabulary, GeneVocabulary, PAD_ID};

/// The ten AlzGene top genes used as the default known-gene list.
pub const ALZGENE_TOP10: [&str; 10] = [
    "APOE", "BIN1", "CLU", "ABCA7", "CR1", "PICALM", "MS4A6A", "CD33", "MS4A4E", "CD2AP",
];

/// Diagnosis class of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    NonAd,
    EarlyAd,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::NonAd => 0,
            Label::EarlyAd => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(Label::NonAd),
            1 => Some(Label::EarlyAd),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::EarlyAd
    }
}

/// One cell: identifier, diagnosis and a sparse expression profile.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub cell_id: String,
    pub label: Label,
    pub expression: BTreeMap<String, f64>,
}

impl CellRecord {
    /// Number of genes with strictly positive expression.
    pub fn n_features(&self) -> usize {
        self.expression.values().filter(|&&v| v > 0.0).count()
    }

    pub fn total_counts(&self) -> f64 {
        self.expression.values().sum()
    }
}

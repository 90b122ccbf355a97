use serde::{Deserialize, Serialize};

use super::CellRecord;

/// Cell quality-control bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcThresholds {
    pub min_features: usize,
    pub max_features: usize,
    /// Maximum fraction of counts on `MT-` genes.
    pub max_mito: f64,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds {
            min_features: 200,
            max_features: 2500,
            max_mito: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    TooFewFeatures(usize),
    TooManyFeatures(usize),
    HighMitochondrial(f64),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::TooFewFeatures(n) => write!(f, "too few features ({n})"),
            RejectReason::TooManyFeatures(n) => write!(f, "too many features ({n})"),
            RejectReason::HighMitochondrial(x) => write!(f, "mitochondrial fraction {x:.4}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub cell_id: String,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct QcOutcome {
    pub kept: Vec<CellRecord>,
    pub rejected: Vec<Rejection>,
}

fn mito_fraction(cell: &CellRecord) -> f64 {
    let total = cell.total_counts();
    if total <= 0.0 {
        return 0.0;
    }
    let mito: f64 = cell
        .expression
        .iter()
        .filter(|(g, _)| g.starts_with("MT-"))
        .map(|(_, &v)| v)
        .sum();
    mito / total
}

fn check(cell: &CellRecord, t: &QcThresholds) -> Option<RejectReason> {
    let n = cell.n_features();
    if n < t.min_features {
        return Some(RejectReason::TooFewFeatures(n));
    }
    if n > t.max_features {
        return Some(RejectReason::TooManyFeatures(n));
    }
    let mito = mito_fraction(cell);
    if mito > t.max_mito {
        return Some(RejectReason::HighMitochondrial(mito));
    }
    None
}

/// Split cells into those inside the QC bounds and those rejected, keeping
/// the input order in both lists.
pub fn qc_filter(cells: Vec<CellRecord>, thresholds: &QcThresholds) -> QcOutcome {
    let mut out = QcOutcome::default();
    for cell in cells {
        match check(&cell, thresholds) {
            None => out.kept.push(cell),
            Some(reason) => out.rejected.push(Rejection {
                cell_id: cell.cell_id,
                reason,
            }),
        }
    }
    out
}

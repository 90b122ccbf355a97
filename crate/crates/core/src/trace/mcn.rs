use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::IEGrid;
use crate::{Error, Result};

/// One most-causal neuron: the hidden state at `(layer, position)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mcn {
    pub layer: usize,
    pub position: usize,
    pub mean_ie: f64,
}

/// Selected neurons, highest indirect effect first.
#[derive(Debug, Clone, PartialEq)]
pub struct McnSet {
    pub entries: Vec<Mcn>,
    pub cutoff: f64,
}

impl McnSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(layer, position) -> mean_ie`.
    pub fn lookup(&self) -> BTreeMap<(usize, usize), f64> {
        self.entries.iter().map(|m| ((m.layer, m.position), m.mean_ie)).collect()
    }

    pub fn contains(&self, layer: usize, position: usize) -> bool {
        self.entries.iter().any(|m| m.layer == layer && m.position == position)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,position,mean_ie\n");
        for m in &self.entries {
            writeln!(out, "{},{},{}", m.layer, m.position, m.mean_ie).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`McnSet::to_csv`]; the cutoff is taken as the smallest
    /// listed value.
    pub fn parse_csv(text: &str, path: &Path) -> Result<McnSet> {
        let perr = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "layer,position,mean_ie" => {}
            _ => return Err(perr(1, "missing header")),
        }
        let mut entries = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(perr(n + 1, "expected 3 fields"));
            }
            entries.push(Mcn {
                layer: f[0].parse().map_err(|_| perr(n + 1, "bad layer"))?,
                position: f[1].parse().map_err(|_| perr(n + 1, "bad position"))?,
                mean_ie: f[2].parse().map_err(|_| perr(n + 1, "bad mean_ie"))?,
            });
        }
        let cutoff = entries.iter().map(|m| m.mean_ie).fold(f64::INFINITY, f64::min);
        Ok(McnSet { entries, cutoff })
    }

    pub fn read_csv(path: &Path) -> Result<McnSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, path)
    }
}

/// Cells whose mean indirect effect reaches the `percentile` cutoff of all
/// populated cells, pooled over layers.
///
/// With the `n` populated values sorted ascending, the cutoff is the value
/// at index `floor(percentile * n / 100)`, so 100 distinct values at the
/// 95th percentile select the top 5.
pub fn select_mcns(grid: &IEGrid, percentile: f64) -> Result<McnSet> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::invalid("percentile must lie strictly between 0 and 100"));
    }
    let cells: Vec<(usize, usize, f64)> = grid.populated().map(|(l, i, v, _)| (l, i, v)).collect();
    if cells.is_empty() {
        return Err(Error::invalid("indirect-effect grid has no populated cells"));
    }
    let mut sorted: Vec<f64> = cells.iter().map(|c| c.2).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((percentile * n as f64 / 100.0).floor() as usize).min(n - 1);
    let cutoff = sorted[idx];
    let mut entries: Vec<Mcn> = cells
        .into_iter()
        .filter(|c| c.2 >= cutoff)
        .map(|(layer, position, mean_ie)| Mcn { layer, position, mean_ie })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_ie
            .total_cmp(&a.mean_ie)
            .then(a.layer.cmp(&b.layer))
            .then(a.position.cmp(&b.position))
    });
    Ok(McnSet { entries, cutoff })
}

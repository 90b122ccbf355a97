//! Line-oriented corpus files.
//!
//! Dataset lines are `cell_id<TAB>label<TAB>gene=count;gene=count;...` with
//! `label` 0 (non-AD) or 1 (early-AD).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{CellRecord, Label};
use crate::{Error, Result};

pub fn parse_dataset(text: &str, path: &Path) -> Result<Vec<CellRecord>> {
    let mut cells = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        };
        let mut fields = line.split('\t');
        let (Some(id), Some(label), Some(expr), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(err("expected 3 tab-separated fields".into()));
        };
        let label = label
            .trim()
            .parse::<usize>()
            .ok()
            .and_then(Label::from_index)
            .ok_or_else(|| err(format!("label must be 0 or 1, got `{label}`")))?;
        let mut expression = BTreeMap::new();
        for pair in expr.split(';').filter(|p| !p.is_empty()) {
            let (gene, count) = pair
                .split_once('=')
                .ok_or_else(|| err(format!("bad gene=count pair `{pair}`")))?;
            let count: f64 = count
                .parse()
                .map_err(|_| err(format!("bad count `{count}`")))?;
            if !count.is_finite() || count < 0.0 {
                return Err(err(format!("count must be non-negative, got {count}")));
            }
            if expression.insert(gene.to_string(), count).is_some() {
                return Err(err(format!("gene `{gene}` listed twice")));
            }
        }
        if !expression.values().any(|&v| v > 0.0) {
            return Err(err("cell has no positive expression".into()));
        }
        cells.push(CellRecord {
            cell_id: id.to_string(),
            label,
            expression,
        });
    }
    Ok(cells)
}

pub fn read_dataset(path: &Path) -> Result<Vec<CellRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn write_dataset(cells: &[CellRecord], path: &Path) -> Result<()> {
    let mut out = String::new();
    for c in cells {
        let _ = write!(out, "{}\t{}\t", c.cell_id, c.label.index());
        for (j, (g, v)) in c.expression.iter().enumerate() {
            if j > 0 {
                out.push(';');
            }
            let _ = write!(out, "{g}={v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One symbol per line; blank lines and `#` comments ignored.
pub fn parse_known_genes(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

pub fn read_known_genes(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_known_genes(&text))
}

pub fn write_known_genes<S: AsRef<str>>(genes: &[S], path: &Path) -> Result<()> {
    let mut out = String::new();
    for g in genes {
        out.push_str(g.as_ref());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{known_positions, noise_seed, sorted_sum, TraceConfig};
use crate::corpus::TokenSequence;
use crate::nnmodel::{forward, resume_from, Intervention, ModelParams};
use crate::{Error, Result};

/// Sample-mean indirect effect per (layer, position).
///
/// Rows are layers `1..=n_layers` (index `layer - 1`); columns positions.
/// Cells never traced have `count == 0` and `mean_ie == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IEGrid {
    pub mean_ie: Vec<Vec<f64>>,
    pub count: Vec<Vec<usize>>,
    /// Samples traced.
    pub n_samples: usize,
    /// Samples without any known-gene token.
    pub n_skipped: usize,
}

impl IEGrid {
    pub fn n_layers(&self) -> usize {
        self.mean_ie.len()
    }

    pub fn max_len(&self) -> usize {
        self.mean_ie.first().map_or(0, Vec::len)
    }

    pub fn get(&self, layer: usize, position: usize) -> f64 {
        self.mean_ie[layer - 1][position]
    }

    /// `(layer, position, mean_ie, count)` of populated cells, layer-major.
    pub fn populated(&self) -> impl Iterator<Item = (usize, usize, f64, usize)> + '_ {
        self.mean_ie.iter().zip(&self.count).enumerate().flat_map(|(l, (m, c))| {
            m.iter()
                .zip(c)
                .enumerate()
                .filter(|(_, (_, &n))| n > 0)
                .map(move |(i, (&v, &n))| (l + 1, i, v, n))
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,position,mean_ie,count\n");
        for (l, i, v, n) in self.populated() {
            writeln!(out, "{l},{i},{v},{n}").unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Inverse of [`IEGrid::to_csv`]. Sample counts are not stored and
    /// come back as zero.
    pub fn parse_csv(text: &str, n_layers: usize, max_len: usize, path: &Path) -> Result<IEGrid> {
        let mut grid = IEGrid {
            mean_ie: vec![vec![0.0; max_len]; n_layers],
            count: vec![vec![0; max_len]; n_layers],
            n_samples: 0,
            n_skipped: 0,
        };
        let perr = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "layer,position,mean_ie,count" => {}
            _ => return Err(perr(1, "missing header".into())),
        }
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(perr(n + 1, "expected 4 fields".into()));
            }
            let l: usize = f[0].parse().map_err(|_| perr(n + 1, "bad layer".into()))?;
            let i: usize = f[1].parse().map_err(|_| perr(n + 1, "bad position".into()))?;
            let v: f64 = f[2].parse().map_err(|_| perr(n + 1, "bad mean_ie".into()))?;
            let c: usize = f[3].parse().map_err(|_| perr(n + 1, "bad count".into()))?;
            if l == 0 || l > n_layers || i >= max_len || c == 0 || !v.is_finite() {
                return Err(perr(n + 1, format!("cell ({l},{i}) out of range")));
            }
            grid.mean_ie[l - 1][i] = v;
            grid.count[l - 1][i] = c;
        }
        Ok(grid)
    }

    pub fn read_csv(path: &Path, n_layers: usize, max_len: usize) -> Result<IEGrid> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text, n_layers, max_len, path)
    }
}

/// Indirect effects of one sample, `[layer - 1][position]` over non-pad
/// positions. Each restored run resumes from the corrupted hidden states
/// with one row replaced by its clean value.
fn trace_sample(
    params: &ModelParams,
    seq: &TokenSequence,
    positions: &[usize],
    cfg: &TraceConfig,
) -> Result<Vec<Vec<f64>>> {
    let clean = forward(params, seq, None)?;
    let iv = Intervention {
        corrupt_positions: positions.to_vec(),
        sigma: cfg.sigma,
        noise_seed: noise_seed(cfg.seed, seq),
        restore: Vec::new(),
    };
    let corrupted = forward(params, seq, Some(&iv))?;
    let p_corrupted = corrupted.p_positive();
    let n_layers = params.config.n_layers;
    let mut out = Vec::with_capacity(n_layers);
    for l in 1..=n_layers {
        let mut row = Vec::with_capacity(seq.n_real);
        for i in 0..seq.n_real {
            let mut h = corrupted.hidden[l].clone();
            h.row_mut(i).assign(&clean.hidden[l].row(i));
            let p_restored = resume_from(params, l, h, seq.n_real)?[1];
            row.push(cfg.ie_sign.apply(p_corrupted, p_restored));
        }
        out.push(row);
    }
    Ok(out)
}

/// Trace every sample holding at least one known token and average the
/// indirect effect per cell over the samples that reach it.
pub fn build_ie_grid(
    params: &ModelParams,
    samples: &[TokenSequence],
    known: &BTreeSet<u32>,
    cfg: &TraceConfig,
) -> Result<IEGrid> {
    cfg.validate()?;
    let mut eligible: Vec<(&TokenSequence, Vec<usize>)> = Vec::new();
    let mut n_skipped = 0;
    for s in samples {
        let pos = known_positions(s, known);
        if pos.is_empty() {
            n_skipped += 1;
        } else if cfg.sample_limit.is_none_or(|m| eligible.len() < m) {
            eligible.push((s, pos));
        }
    }
    if eligible.is_empty() {
        return Err(Error::invalid("no sample contains a known-gene token"));
    }
    let per_sample: Vec<Vec<Vec<f64>>> = eligible
        .par_iter()
        .map(|(s, pos)| trace_sample(params, s, pos, cfg))
        .collect::<Result<_>>()?;

    let n_layers = params.config.n_layers;
    let max_len = params.config.max_len;
    let mut mean_ie = vec![vec![0.0; max_len]; n_layers];
    let mut count = vec![vec![0; max_len]; n_layers];
    let mut values = Vec::with_capacity(per_sample.len());
    for l in 0..n_layers {
        for i in 0..max_len {
            values.clear();
            values.extend(per_sample.iter().filter_map(|g| g[l].get(i).copied()));
            if !values.is_empty() {
                count[l][i] = values.len();
                mean_ie[l][i] = sorted_sum(&mut values) / values.len() as f64;
            }
        }
    }
    Ok(IEGrid {
        mean_ie,
        count,
        n_samples: per_sample.len(),
        n_skipped,
    })
}

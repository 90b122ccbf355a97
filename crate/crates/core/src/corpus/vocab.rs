use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Token id reserved for padding; never mapped to a gene.
pub const PAD_ID: u32 = 0;

/// Bijective map between gene symbols and token ids `1..=G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneVocabulary {
    ids: BTreeMap<String, u32>,
    // symbols[id - 1]
    symbols: Vec<String>,
}

/// Assign ids `1..=G` to the symbols in lexicographic order.
pub fn build_vocabulary<I, S>(symbols: I) -> Result<GeneVocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut sorted: Vec<String> = Vec::new();
    for s in symbols {
        let s = s.as_ref().trim();
        if s.is_empty() {
            return Err(Error::invalid("empty gene symbol"));
        }
        sorted.push(s.to_string());
    }
    if sorted.is_empty() {
        return Err(Error::invalid("vocabulary needs at least one symbol"));
    }
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateSymbol(w[0].clone()));
    }
    Ok(GeneVocabulary::from_sorted(sorted))
}

impl GeneVocabulary {
    fn from_sorted(symbols: Vec<String>) -> Self {
        let ids = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32 + 1))
            .collect();
        GeneVocabulary { ids, symbols }
    }

    pub fn id(&self, symbol: &str) -> Option<u32> {
        self.ids.get(symbol).copied()
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        if id == PAD_ID {
            return None;
        }
        self.symbols.get(id as usize - 1).map(String::as_str)
    }

    /// Number of genes `G`.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Embedding table rows needed: genes plus the padding id.
    pub fn vocab_size(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().map(String::as_str)
    }

    pub fn pad_id(&self) -> u32 {
        PAD_ID
    }

    /// `symbol<TAB>token_id` lines in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.symbols.iter().enumerate() {
            let _ = writeln!(out, "{s}\t{}", i + 1);
        }
        out
    }

    /// Parse a vocabulary file. Ids must be exactly `1..=G` and consistent
    /// with lexicographic order so that a file round-trips to the same map.
    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut pairs: Vec<(u32, String)> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: &str| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: msg.to_string(),
            };
            let (sym, id) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `symbol<TAB>token_id`"))?;
            let id: u32 = id.trim().parse().map_err(|_| parse_err("bad token id"))?;
            let sym = sym.trim();
            if sym.is_empty() {
                return Err(parse_err("empty symbol"));
            }
            pairs.push((id, sym.to_string()));
        }
        if pairs.is_empty() {
            return Err(Error::invalid(format!("{}: empty vocabulary", path.display())));
        }
        pairs.sort();
        for (expected, (id, _)) in pairs.iter().enumerate() {
            if *id != expected as u32 + 1 {
                return Err(Error::invalid(format!(
                    "{}: token ids must be contiguous 1..G (found {id})",
                    path.display()
                )));
            }
        }
        let symbols: Vec<String> = pairs.into_iter().map(|(_, s)| s).collect();
        let vocab = build_vocabulary(&symbols)?;
        if vocab.symbols != symbols {
            return Err(Error::invalid(format!(
                "{}: token ids are not in lexicographic symbol order",
                path.display()
            )));
        }
        Ok(vocab)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

use super::{CellRecord, GeneVocabulary};
use crate::{Error, Result};

/// Rank-ordered gene tokens of one cell, padded to a fixed length.
///
/// Non-pad tokens always form a prefix of `tokens`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub n_real: usize,
}

impl TokenSequence {
    pub fn max_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn real_tokens(&self) -> &[u32] {
        &self.tokens[..self.n_real]
    }
}

/// Tokens of positively expressed genes, highest expression first.
///
/// Equal expression values are ordered by ascending token id.
pub fn encode_rank_values(cell: &CellRecord, vocab: &GeneVocabulary) -> Result<Vec<u32>> {
    let mut ranked: Vec<(f64, u32)> = Vec::with_capacity(cell.expression.len());
    for (gene, &value) in &cell.expression {
        let id = vocab
            .id(gene)
            .ok_or_else(|| Error::UnknownGene(gene.clone()))?;
        if !value.is_finite() || value < 0.0 {
            return Err(Error::invalid(format!(
                "cell {}: invalid expression {value} for {gene}",
                cell.cell_id
            )));
        }
        if value > 0.0 {
            ranked.push((value, id));
        }
    }
    if ranked.is_empty() {
        return Err(Error::invalid(format!(
            "cell {}: no positive expression",
            cell.cell_id
        )));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(ranked.into_iter().map(|(_, id)| id).collect())
}

/// Fit a ranked token list into `max_len` slots.
///
/// Long lists keep the first `ceil(max_len/2)` and last `floor(max_len/2)`
/// tokens (most up- and down-regulated genes); short lists are padded.
pub fn truncate_and_pad(ranked: &[u32], max_len: usize, pad_id: u32) -> TokenSequence {
    assert!(max_len >= 2, "max_len must be at least 2");
    if ranked.len() > max_len {
        let head = max_len.div_ceil(2);
        let tail = max_len / 2;
        let mut tokens = Vec::with_capacity(max_len);
        tokens.extend_from_slice(&ranked[..head]);
        tokens.extend_from_slice(&ranked[ranked.len() - tail..]);
        TokenSequence {
            tokens,
            n_real: max_len,
        }
    } else {
        let mut tokens = ranked.to_vec();
        tokens.resize(max_len, pad_id);
        TokenSequence {
            tokens,
            n_real: ranked.len(),
        }
    }
}

/// `encode_rank_values` followed by `truncate_and_pad`.
pub fn tokenize(cell: &CellRecord, vocab: &GeneVocabulary, max_len: usize) -> Result<TokenSequence> {
    let ranked = encode_rank_values(cell, vocab)?;
    Ok(truncate_and_pad(&ranked, max_len, vocab.pad_id()))
}

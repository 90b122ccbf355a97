//! Binary checkpoint container.
//!
//! Layout: the magic bytes `RGFM`, a little-endian `u32` version, a
//! little-endian `u64` header length, a JSON header holding the model
//! config and the tensor index, then every tensor as row-major
//! little-endian `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGFM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// offset into the payload, in elements
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

pub(crate) fn encode(params: &ModelParams) -> Vec<u8> {
    let mut offset = 0;
    let tensors: Vec<TensorEntry> = params
        .tensors()
        .into_iter()
        .map(|t| {
            let e = TensorEntry {
                name: t.name,
                shape: t.view.shape().to_vec(),
                offset,
            };
            offset += t.view.len();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: params.config.clone(),
        tensors,
    })
    .expect("header serializes");

    let mut out = Vec::with_capacity(16 + header.len() + offset * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        // iter() walks logical (row-major) order
        for v in t.view.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
    let out = &bytes[*at..end];
    *at = end;
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().unwrap());
    let header_len = usize::try_from(header_len)
        .map_err(|_| Error::Checkpoint("header length overflow".into()))?;
    let header: Header = serde_json::from_slice(take(bytes, &mut at, header_len)?)
        .map_err(|e| Error::Checkpoint(format!("malformed header: {e}")))?;
    header
        .config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;

    let mut params = ModelParams::zeros(&header.config);
    let payload_start = at;
    let mut views = params.tensors_mut();
    if views.len() != header.tensors.len() {
        return Err(Error::Checkpoint("tensor count mismatch".into()));
    }
    for (view, entry) in views.iter_mut().zip(&header.tensors) {
        if view.name != entry.name || view.view.shape() != entry.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` does not match the config",
                entry.name
            )));
        }
        let mut pos = payload_start + entry.offset * 8;
        let raw = take(bytes, &mut pos, view.view.len() * 8)?;
        for (v, chunk) in view.view.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    drop(views);
    if !params.all_finite() {
        return Err(Error::Checkpoint("non-finite parameter".into()));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

/// Load parameters; the config travels inside `ModelParams`.
pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{truncate_and_pad, PAD_ID};
    use crate::nnmodel::{forward, init_model};

    fn params() -> ModelParams {
        init_model(&ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 4,
            d_ff: 6,
            vocab_size: 10,
            max_len: 5,
            n_classes: 2,
            init_seed: 1,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rgfm");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        assert_eq!(p, q);
        let seq = truncate_and_pad(&[3, 1, 7], 5, PAD_ID);
        assert_eq!(forward(&p, &seq, None).unwrap(), forward(&q, &seq, None).unwrap());
    }

    #[test]
    fn corrupt_containers() {
        let bytes = encode(&params());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[4..8].copy_from_slice(&99u32.to_le_bytes());
        assert!(matches!(decode(&bad), Err(Error::UnsupportedVersion(99))));
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(m)) if m.contains("truncated")));
        assert!(decode(&bytes[..10]).is_err());
    }
}

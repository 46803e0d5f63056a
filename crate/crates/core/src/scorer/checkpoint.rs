//! Binary checkpoint layout:
//! `KMSECKPT` | version u32 LE | manifest length u64 LE | manifest JSON | f32 LE payload.
//! Tensors are stored row-major in manifest order with contiguous offsets.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ParamSet, ScorerCheckpoint, ScorerConfig, ScorerError};

const MAGIC: &[u8; 8] = b"KMSECKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: ScorerConfig,
    tensors: Vec<TensorEntry>,
    id: String,
    best_val_loss: Option<f64>,
}

fn directory(params: &ParamSet) -> Vec<TensorEntry> {
    let mut offset = 0;
    params
        .names()
        .iter()
        .zip(params.tensors())
        .map(|(name, t)| {
            let entry = TensorEntry { name: name.clone(), shape: [t.nrows(), t.ncols()], offset };
            offset += t.len();
            entry
        })
        .collect()
}

fn payload(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.scalar_count() * 4);
    for t in params.tensors() {
        for &x in t.iter() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

fn hash(config: &ScorerConfig, dir: &[TensorEntry], payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(serde_json::to_vec(dir).expect("directory serializes"));
    h.update(payload);
    hex::encode(h.finalize())
}

/// Content hash over config, tensor directory, and `f32` payload.
pub(super) fn content_id(config: &ScorerConfig, params: &ParamSet) -> String {
    hash(config, &directory(params), &payload(params))
}

pub fn encode(ckpt: &ScorerCheckpoint) -> Vec<u8> {
    let manifest = Manifest {
        config: ckpt.config.clone(),
        tensors: directory(&ckpt.params),
        id: ckpt.id.clone(),
        best_val_loss: ckpt.best_val_loss,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let body = payload(&ckpt.params);
    let mut out = Vec::with_capacity(20 + json.len() + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&body);
    out
}

pub fn decode(bytes: &[u8]) -> Result<ScorerCheckpoint, ScorerError> {
    let format = |m: &str| ScorerError::FormatError(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(format("missing KMSECKPT header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(ScorerError::FormatError(format!("unsupported version {version}")));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let json = bytes.get(20..20usize.saturating_add(len)).ok_or_else(|| format("truncated manifest"))?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| ScorerError::FormatError(format!("manifest: {e}")))?;
    manifest.config.validate().map_err(|e| ScorerError::ShapeMismatch(e.to_string()))?;
    let body = &bytes[20 + len..];

    let (template, _) = super::model::build(&manifest.config, None);
    if template.len() != manifest.tensors.len() {
        return Err(ScorerError::ShapeMismatch(format!(
            "config implies {} tensors, manifest lists {}",
            template.len(),
            manifest.tensors.len()
        )));
    }
    let mut params = ParamSet::new();
    let mut offset = 0;
    for (i, entry) in manifest.tensors.iter().enumerate() {
        let expected = template.get(i).dim();
        if entry.name != template.name(i) || (entry.shape[0], entry.shape[1]) != expected {
            return Err(ScorerError::ShapeMismatch(format!(
                "tensor {i}: config implies {} {:?}, manifest has {} {:?}",
                template.name(i),
                expected,
                entry.name,
                entry.shape
            )));
        }
        if entry.offset != offset {
            return Err(ScorerError::FormatError(format!("tensor {} has non-contiguous offset", entry.name)));
        }
        let n = entry.shape[0] * entry.shape[1];
        let raw = body.get(offset * 4..(offset + n) * 4).ok_or_else(|| format("truncated payload"))?;
        let values: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        params.add(entry.name.clone(), Array2::from_shape_vec((entry.shape[0], entry.shape[1]), values).unwrap());
        offset += n;
    }
    if body.len() != offset * 4 {
        return Err(format("trailing bytes after payload"));
    }
    let ckpt = ScorerCheckpoint::from_params(manifest.config, params, manifest.best_val_loss)?;
    if ckpt.id != manifest.id {
        return Err(ScorerError::FormatError(format!("id mismatch: stored {}, computed {}", manifest.id, ckpt.id)));
    }
    Ok(ckpt)
}

pub fn save_checkpoint(ckpt: &ScorerCheckpoint, path: impl AsRef<Path>) -> Result<(), ScorerError> {
    fs::write(path, encode(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ScorerCheckpoint, ScorerError> {
    decode(&fs::read(path)?)
}

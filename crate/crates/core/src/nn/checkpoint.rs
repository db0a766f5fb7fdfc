//! Parameter checkpoints: a JSON manifest (names, shapes, byte offsets,
//! free-form metadata) followed by the flat little-endian `f64` payload.
//!
//! Layout: magic `EVCK`, `u64` manifest length, manifest JSON, payload.
//! Saving the same parameters and metadata twice produces identical bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::ParamSet;
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"EVCK";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("manifest error: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: u64,
    /// Element count.
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    meta: BTreeMap<String, String>,
    tensors: Vec<TensorRecord>,
}

pub fn save(
    path: &Path,
    params: &ParamSet,
    meta: &BTreeMap<String, String>,
) -> Result<(), CheckpointError> {
    let mut records = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        records.push(TensorRecord {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            offset,
            len: t.numel() as u64,
        });
        offset += (t.numel() * 8) as u64;
    }
    let manifest = Manifest {
        meta: meta.clone(),
        tensors: records,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;

    let mut file = File::create(path)?;
    file.write_all(MAGIC)?;
    file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&manifest_bytes)?;
    let mut payload = Vec::with_capacity(offset as usize);
    for (_, t) in params.iter() {
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&payload)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(ParamSet, BTreeMap<String, String>), CheckpointError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(CheckpointError::Format("bad magic".into()));
    }
    let mlen = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let manifest_end = 12 + mlen;
    if bytes.len() < manifest_end {
        return Err(CheckpointError::Format("truncated manifest".into()));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..manifest_end])?;
    let payload = &bytes[manifest_end..];

    let mut params = ParamSet::new();
    for rec in &manifest.tensors {
        let start = rec.offset as usize;
        let end = start + rec.len as usize * 8;
        if end > payload.len() {
            return Err(CheckpointError::Format(format!(
                "tensor '{}' overruns payload",
                rec.name
            )));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(rec.shape.clone(), data)
            .map_err(|e| CheckpointError::Format(format!("tensor '{}': {}", rec.name, e)))?;
        params
            .insert(rec.name.clone(), tensor)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
    }
    Ok((params, manifest.meta))
}

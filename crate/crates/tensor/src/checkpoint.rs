//! Checkpoint file format: a JSON manifest followed by a flat little-endian
//! value blob. One format for pre-trained and fine-tuned weights.
//!
//! Layout: 8-byte magic `SNCKPT01`, u64-LE manifest length, manifest JSON,
//! then each tensor's raw values in manifest order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Real, Result, TensorError};

const MAGIC: &[u8; 8] = b"SNCKPT01";

#[derive(Debug, Clone)]
pub struct NamedTensor<T: Real> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    numel: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: u32,
    dtype: String,
    meta: serde_json::Value,
    tensors: Vec<ManifestEntry>,
}

pub fn save<T: Real, P: AsRef<Path>>(
    path: P,
    meta: &serde_json::Value,
    tensors: &[NamedTensor<T>],
) -> Result<()> {
    let mut offset = 0usize;
    let entries: Vec<ManifestEntry> = tensors
        .iter()
        .map(|t| {
            let e = ManifestEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
                numel: t.data.len(),
            };
            offset += t.data.len();
            e
        })
        .collect();
    let manifest = Manifest {
        format: 1,
        dtype: T::DTYPE.to_string(),
        meta: meta.clone(),
        tensors: entries,
    };
    let manifest_bytes =
        serde_json::to_vec(&manifest).map_err(|e| TensorError::Manifest(e.to_string()))?;

    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(MAGIC)?;
    file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&manifest_bytes)?;
    let mut buf = Vec::with_capacity(offset * T::BYTES);
    for t in tensors {
        for &v in &t.data {
            T::write_le(v, &mut buf);
        }
    }
    file.write_all(&buf)?;
    file.flush()?;
    Ok(())
}

pub fn load<T: Real, P: AsRef<Path>>(path: P) -> Result<(serde_json::Value, Vec<NamedTensor<T>>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Manifest("bad checkpoint magic".into()));
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes) as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    file.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest =
        serde_json::from_slice(&manifest_bytes).map_err(|e| TensorError::Manifest(e.to_string()))?;
    if manifest.dtype != T::DTYPE {
        return Err(TensorError::Manifest(format!(
            "checkpoint dtype {} but requested {}",
            manifest.dtype,
            T::DTYPE
        )));
    }
    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let start = e.offset * T::BYTES;
        let end = start + e.numel * T::BYTES;
        if end > blob.len() {
            return Err(TensorError::Manifest(format!(
                "tensor {} extends past blob",
                e.name
            )));
        }
        let numel_from_shape: usize = e.shape.iter().product();
        if numel_from_shape != e.numel {
            return Err(TensorError::Manifest(format!(
                "tensor {} shape/numel mismatch",
                e.name
            )));
        }
        let data: Vec<T> = blob[start..end]
            .chunks_exact(T::BYTES)
            .map(T::read_le)
            .collect();
        tensors.push(NamedTensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    Ok((manifest.meta, tensors))
}

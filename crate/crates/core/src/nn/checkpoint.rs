//! Parameter blobs: a flat little-endian f64 file paired with a JSON manifest
//! that names every slice and records a SHA-256 of the blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::{ParamSlice, ParameterStore};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobManifest {
    pub blob: String,
    pub count: usize,
    pub sha256: String,
    pub slices: Vec<ParamSlice>,
}

pub fn encode_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_le(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidInput(format!("parameter blob length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

/// Writes `<stem>.bin` and returns the manifest describing it.
pub fn write_blob(dir: &Path, stem: &str, store: &ParameterStore) -> Result<BlobManifest> {
    fs::create_dir_all(dir)?;
    let bytes = encode_le(&store.values);
    let blob = format!("{stem}.bin");
    fs::write(dir.join(&blob), &bytes)?;
    Ok(BlobManifest { blob, count: store.values.len(), sha256: hex::encode(Sha256::digest(&bytes)), slices: store.slices.clone() })
}

/// Reads the blob named by `manifest` relative to `dir` and checks its digest.
pub fn read_blob(dir: &Path, manifest: &BlobManifest) -> Result<ParameterStore> {
    let path: PathBuf = dir.join(&manifest.blob);
    if !path.exists() {
        return Err(Error::MissingArtifact(path));
    }
    let bytes = fs::read(&path)?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != manifest.sha256 {
        return Err(Error::InvalidInput(format!("checksum mismatch for {}", path.display())));
    }
    let values = decode_le(&bytes)?;
    if values.len() != manifest.count {
        return Err(Error::DimensionMismatch { context: "parameter blob", expected: manifest.count, actual: values.len() });
    }
    let grads = vec![0.0; values.len()];
    Ok(ParameterStore { values, grads, slices: manifest.slices.clone() })
}

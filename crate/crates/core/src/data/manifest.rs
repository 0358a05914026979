use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetRole, Normalizer, WindowSpec};
use crate::{Error, Result};

/// Describes a dataset without duplicating its samples: windows are cut from
/// the referenced trajectory when the dataset is loaded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub role: DatasetRole,
    /// Trajectory manifest path, relative to the dataset manifest.
    pub trajectory: String,
    pub spec: WindowSpec,
    pub samples: usize,
    pub starts: Vec<usize>,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub normalizer: Normalizer,
    #[serde(default)]
    pub config_hash: String,
}

pub fn write_dataset_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

pub fn read_dataset_manifest(path: &Path) -> Result<DatasetManifest> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

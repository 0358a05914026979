use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnodeModel, EpochRecord, ModelConfig, ModelKind};
use crate::data::Normalizer;
use crate::nn::checkpoint::{read_blob, write_blob, BlobManifest};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub best_epoch: usize,
    pub best_val: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

/// JSON side of a model checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub n_nodes: usize,
    pub normalizer: Normalizer,
    pub parameters: BlobManifest,
    pub training: Option<TrainingSummary>,
    #[serde(default)]
    pub config_hash: String,
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`; returns the manifest path.
pub fn save_model(
    dir: &Path,
    stem: &str,
    model: &AnodeModel,
    normalizer: &Normalizer,
    training: Option<TrainingSummary>,
    config_hash: &str,
) -> Result<PathBuf> {
    let parameters = write_blob(dir, stem, &model.store)?;
    let manifest = ModelManifest {
        kind: model.kind(),
        config: model.config.clone(),
        n_nodes: model.n_nodes,
        normalizer: normalizer.clone(),
        parameters,
        training,
        config_hash: config_hash.to_string(),
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Rebuilds the architecture from the manifest and loads its parameters.
pub fn load_model(path: &Path) -> Result<(AnodeModel, ModelManifest)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(path)?)?;
    if manifest.kind != manifest.config.kind {
        return Err(Error::InvalidInput(format!("checkpoint kind {} disagrees with its config ({})", manifest.kind, manifest.config.kind)));
    }
    let mut model = AnodeModel::new(manifest.config.clone(), manifest.n_nodes)?;
    let store = read_blob(path.parent().unwrap_or(Path::new(".")), &manifest.parameters)?;
    if store.slices != model.store.slices {
        return Err(Error::InvalidInput(format!("parameter layout in {} does not match its architecture", path.display())));
    }
    model.store = store;
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_restores_parameters() {
        let config = ModelConfig { rhs_layers: 1, rhs_width: 5, encoder_width: 3, history: 4, seed: 8, ..ModelConfig::default() };
        let model = AnodeModel::new(config, 2).unwrap();
        let norm = Normalizer::identity(2, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = save_model(dir.path(), "model", &model, &norm, None, "abc").unwrap();
        let (back, manifest) = load_model(&path).unwrap();
        assert_eq!(back.store.values, model.store.values);
        assert_eq!(manifest.kind, ModelKind::TcnAnode);
        assert_eq!(manifest.config_hash, "abc");
        assert!(matches!(load_model(&dir.path().join("nope.json")), Err(Error::MissingArtifact(_))));
    }
}

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SearchSpace, Study, StudyOptions, Trial};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub space: SearchSpace,
    pub options: StudyOptions,
    pub best_trial: Option<usize>,
    pub trials: Vec<Trial>,
    #[serde(default)]
    pub config_hash: String,
}

/// One row per trial: config, status, final metric and one column per checkpoint.
pub fn write_study_csv(path: &Path, study: &Study) -> Result<()> {
    let epochs = study.checkpoint_epochs();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["trial", "status", "rhs_layers", "rhs_width", "encoder_width", "learning_rate", "activation", "seed", "pruned_at", "final_metric"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(epochs.iter().map(|e| format!("metric_epoch_{e}")));
    w.write_record(&header)?;
    for t in &study.trials {
        let c = &t.config;
        let mut rec = vec![
            t.id.to_string(),
            serde_json::to_value(t.status)?.as_str().unwrap_or_default().to_string(),
            c.rhs_layers.to_string(),
            c.rhs_width.to_string(),
            c.encoder_width.to_string(),
            c.learning_rate.to_string(),
            c.activation.name().to_string(),
            t.seed.to_string(),
            t.pruned_at.map(|e| e.to_string()).unwrap_or_default(),
            t.final_metric.map(|m| m.to_string()).unwrap_or_default(),
        ];
        rec.extend(epochs.iter().map(|e| t.metric_at(*e).map(|m| m.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_study_manifest(path: &Path, manifest: &StudyManifest) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(manifest)?)?;
    Ok(())
}

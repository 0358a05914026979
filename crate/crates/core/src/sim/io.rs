//! Trajectory CSV files and their JSON sidecar manifest.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{StepSchedule, Trajectory};
use crate::dynamics::{SystemModel, Unit};
use crate::{Error, Result};

/// Everything needed to regenerate a trajectory pair bit-identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub role: String,
    pub dt: f64,
    pub duration: f64,
    pub warmup: f64,
    pub snr_db: Option<f64>,
    pub noise_seed: u64,
    pub schedule: StepSchedule,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub clean_file: String,
    pub noisy_file: String,
    #[serde(default)]
    pub config_hash: String,
}

/// Input column names `u_<node>` in layout order.
pub fn input_names(model: &SystemModel) -> Vec<String> {
    model.graph().nodes().iter().map(|id| format!("u_{id}")).collect()
}

/// Output column names in state order: `p_m_<node>` or `omega_<node>`, then `v_<node>`.
pub fn output_names(model: &SystemModel) -> Vec<String> {
    model
        .graph()
        .nodes()
        .iter()
        .zip(model.units())
        .flat_map(|(id, unit)| {
            let second = match unit {
                Unit::Gfi(_) => format!("p_m_{id}"),
                Unit::Sg(_) => format!("omega_{id}"),
            };
            [second, format!("v_{id}")]
        })
        .collect()
}

fn write_csv(path: &Path, header: &[String], traj: &Trajectory, outputs: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    let mut record = Vec::with_capacity(header.len());
    for k in 0..traj.len() {
        record.clear();
        record.push(traj.times[k].to_string());
        record.extend(traj.inputs.row(k).iter().map(f64::to_string));
        record.extend(outputs.row(k).iter().map(f64::to_string));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>_clean.csv`, `<stem>_noisy.csv` and `<stem>.json` into `dir` and
/// returns the manifest path.
pub fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, manifest: &mut TrajectoryManifest) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    manifest.clean_file = format!("{stem}_clean.csv");
    manifest.noisy_file = format!("{stem}_noisy.csv");
    let header: Vec<String> = std::iter::once("time".to_string())
        .chain(manifest.inputs.iter().cloned())
        .chain(manifest.outputs.iter().cloned())
        .collect();
    write_csv(&dir.join(&manifest.clean_file), &header, traj, &traj.outputs)?;
    write_csv(&dir.join(&manifest.noisy_file), &header, traj, &traj.noisy_outputs)?;
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_string_pretty(manifest)?)?;
    Ok(path)
}

fn read_csv(path: &Path, n_u: usize, n_y: usize) -> Result<(Vec<f64>, Array2<f64>, Array2<f64>)> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let width = 1 + n_u + n_y;
    let mut times = Vec::new();
    let mut flat_u = Vec::new();
    let mut flat_y = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Parse { line: row + 2, column: 1, message: format!("expected {width} fields, found {}", rec.len()) });
        }
        for (col, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: row + 2,
                column: col + 1,
                message: format!("non-numeric field '{field}' in {}", path.display()),
            })?;
            match col {
                0 => times.push(v),
                c if c <= n_u => flat_u.push(v),
                _ => flat_y.push(v),
            }
        }
    }
    let t = times.len();
    let u = Array2::from_shape_vec((t, n_u), flat_u).expect("row width checked");
    let y = Array2::from_shape_vec((t, n_y), flat_y).expect("row width checked");
    Ok((times, u, y))
}

/// Loads a trajectory pair through its manifest.
pub fn read_trajectory(manifest_path: &Path) -> Result<(TrajectoryManifest, Trajectory)> {
    if !manifest_path.exists() {
        return Err(Error::MissingArtifact(manifest_path.to_path_buf()));
    }
    let manifest: TrajectoryManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let (n_u, n_y) = (manifest.inputs.len(), manifest.outputs.len());
    let (times, inputs, outputs) = read_csv(&dir.join(&manifest.clean_file), n_u, n_y)?;
    let (_, _, noisy_outputs) = read_csv(&dir.join(&manifest.noisy_file), n_u, n_y)?;
    if noisy_outputs.nrows() != times.len() {
        return Err(Error::InvalidInput("clean and noisy trajectory lengths differ".into()));
    }
    let traj = Trajectory { dt: manifest.dt, times, states: None, inputs, outputs, noisy_outputs };
    Ok((manifest, traj))
}

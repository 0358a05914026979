//! Run configuration: one JSON document, fully defaulted, that determines every
//! artifact of a pipeline run together with the seeds it contains.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::anode::ModelConfig;
use crate::cases;
use crate::data::{DatasetRole, DatasetSpecs, WindowSpec};
use crate::dynamics::{GfiParams, NodeUnit, SgParams, SystemDocument, SystemModel, Unit};
use crate::grid::{parse_matpower_case, Edge, NetworkGraph};
use crate::hpo::SearchSpace;
use crate::anode::TrainOptions;
use crate::{Error, Result};

/// Environment variable naming the directory relative output paths resolve against.
pub const OUTPUT_ROOT_ENV: &str = "ANODE_OUTPUT_ROOT";

/// Droop parameters applied to every unit of one type on an ingested case,
/// before the per-node spread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitTemplate {
    pub m: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub gfi: Vec<u32>,
    pub sg: Vec<u32>,
    pub reference: u32,
    pub gfi_template: UnitTemplate,
    pub sg_template: UnitTemplate,
    /// Relative half-width of the uniform variation applied to each parameter.
    pub spread: f64,
    pub seed: u64,
}

impl Default for Placement {
    fn default() -> Self {
        Self {
            gfi: Vec::new(),
            sg: Vec::new(),
            reference: 1,
            gfi_template: UnitTemplate { m: 0.0, k_p: 1.0, k_q: 0.1, tau: 0.25 },
            sg_template: UnitTemplate { m: 0.15, k_p: 1.2, k_q: 0.1, tau: 0.3 },
            spread: 0.2,
            seed: 0,
        }
    }
}

/// Where the system comes from: a built-in case, a JSON system document, or a
/// Matpower file plus a unit placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseConfig {
    pub builtin: Option<String>,
    pub system_file: Option<PathBuf>,
    pub matpower: Option<PathBuf>,
    pub placement: Placement,
}

impl Default for CaseConfig {
    fn default() -> Self {
        Self { builtin: Some("three-node".into()), system_file: None, matpower: None, placement: Placement::default() }
    }
}

fn vary(rng: &mut ChaCha8Rng, value: f64, spread: f64) -> f64 {
    if spread > 0.0 {
        value * (1.0 + rng.random_range(-spread..=spread))
    } else {
        value
    }
}

impl CaseConfig {
    pub fn build(&self) -> Result<SystemModel> {
        if let Some(path) = &self.matpower {
            return self.build_matpower(path);
        }
        if let Some(path) = &self.system_file {
            if !path.exists() {
                return Err(Error::MissingArtifact(path.clone()));
            }
            let doc: SystemDocument = serde_json::from_str(&fs::read_to_string(path)?)?;
            return SystemModel::from_document(doc);
        }
        let name = self.builtin.as_deref().unwrap_or("three-node");
        cases::by_name(name).ok_or_else(|| Error::InvalidInput(format!("unknown built-in case '{name}'")))
    }

    fn build_matpower(&self, path: &Path) -> Result<SystemModel> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let case = parse_matpower_case(&fs::read_to_string(path)?)?;
        let pl = &self.placement;
        let mut edges: Vec<Edge> = case.graph.edges().into_iter().filter(|e| e.from != e.to).collect();
        // Demand becomes a constant-impedance load at nominal voltage.
        for (i, &id) in case.graph.nodes().iter().enumerate() {
            let y = case.graph.shunt(i) + Complex64::new(case.load_p[i], -case.load_q[i]);
            if y.norm() > 0.0 {
                edges.push(Edge::shunt(id, y));
            }
        }
        let graph = NetworkGraph::new(case.graph.nodes().iter().copied(), &edges)?;
        let mut rng = ChaCha8Rng::seed_from_u64(pl.seed);
        let mut units = Vec::with_capacity(graph.len());
        for (i, &id) in graph.nodes().iter().enumerate() {
            let (p, q) = (case.p_nominal[i], case.q_nominal[i]);
            let unit = if pl.gfi.contains(&id) {
                let t = pl.gfi_template;
                Unit::Gfi(GfiParams {
                    k_p: vary(&mut rng, t.k_p, pl.spread),
                    k_q: vary(&mut rng, t.k_q, pl.spread),
                    tau: vary(&mut rng, t.tau, pl.spread),
                    omega_d: cases::OMEGA_50HZ,
                    v_d: 1.0,
                    p_d_nom: p,
                    q_d_nom: q,
                })
            } else if pl.sg.contains(&id) {
                let t = pl.sg_template;
                Unit::Sg(SgParams {
                    m: vary(&mut rng, t.m, pl.spread),
                    k_p: vary(&mut rng, t.k_p, pl.spread),
                    k_q: vary(&mut rng, t.k_q, pl.spread),
                    tau: vary(&mut rng, t.tau, pl.spread),
                    omega_d: cases::OMEGA_50HZ,
                    v_d: 1.0,
                    p_d_nom: p,
                    q_d_nom: q,
                })
            } else {
                return Err(Error::InvalidInput(format!(
                    "node {id} has no unit; passive nodes would need Kron reduction, which is not supported"
                )));
            };
            units.push(NodeUnit { node: id, unit });
        }
        SystemModel::new(graph, &units, pl.reference)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub role: DatasetRole,
    pub duration: f64,
    pub step_period: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub dt: f64,
    pub warmup: f64,
    pub step_amplitude: f64,
    /// Measurement SNR in dB; `null` disables noise.
    pub snr_db: Option<f64>,
    pub trajectories: Vec<TrajectoryConfig>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let t = |role, duration, step_period, seed| TrajectoryConfig { role, duration, step_period, seed };
        Self {
            dt: 0.01,
            warmup: 5.0,
            step_amplitude: 0.2,
            snr_db: Some(25.0),
            trajectories: vec![
                t(DatasetRole::Train, 250.0, 5.0, 1),
                t(DatasetRole::Validation, 250.0, 5.0, 2),
                t(DatasetRole::Test, 250.0, 5.0, 3),
                t(DatasetRole::Evaluation, 1010.0, 10.0, 4),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoConfig {
    pub space: SearchSpace,
    pub n_trials: usize,
    pub seed: u64,
}

impl Default for HpoConfig {
    fn default() -> Self {
        Self { space: SearchSpace::default(), n_trials: 20, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub case: CaseConfig,
    pub simulation: SimulationConfig,
    pub windows: DatasetSpecs,
    pub normalize: bool,
    pub model: ModelConfig,
    pub training: TrainOptions,
    pub hpo: HpoConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: CaseConfig::default(),
            simulation: SimulationConfig::default(),
            windows: DatasetSpecs::default(),
            normalize: true,
            model: ModelConfig::default(),
            training: TrainOptions::default(),
            hpo: HpoConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// The reduced configuration used for quick end-to-end runs: 100 s
    /// trajectories, 32-instant windows and a small network.
    pub fn desk_scale() -> Self {
        let mut c = Self::default();
        let t = |role, duration, step_period, seed| TrajectoryConfig { role, duration, step_period, seed };
        c.simulation.trajectories = vec![
            t(DatasetRole::Train, 100.0, 5.0, 1),
            t(DatasetRole::Validation, 100.0, 5.0, 2),
            t(DatasetRole::Test, 100.0, 5.0, 3),
            t(DatasetRole::Evaluation, 250.0, 10.0, 4),
        ];
        let w = WindowSpec { history: 32, horizon: 32, stride: 16, first: None };
        c.windows = DatasetSpecs { train: w, validation: w, test: w, evaluation: WindowSpec { history: 32, horizon: 500, stride: 1000, first: Some(1000) }, batch_size: 64 };
        c.model = ModelConfig { rhs_layers: 1, rhs_width: 64, encoder_width: 16, history: 32, ..ModelConfig::default() };
        c.training = TrainOptions { max_epochs: 300, patience: 50, learning_rate: 3e-3, batch_size: 64, ..TrainOptions::default() };
        c.output_dir = PathBuf::from("runs/desk");
        c
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Checks the cross-field constraints the individual types cannot.
    pub fn validate(&self) -> Result<()> {
        if !(self.simulation.dt > 0.0) || self.simulation.warmup < 0.0 {
            return Err(Error::InvalidInput("simulation dt must be positive and warm-up non-negative".into()));
        }
        if (self.model.dt - self.simulation.dt).abs() > 1e-15 {
            return Err(Error::InvalidInput(format!("model dt {} differs from the sampling interval {}", self.model.dt, self.simulation.dt)));
        }
        for role in DatasetRole::ALL {
            self.windows.get(role).validate()?;
            if !self.simulation.trajectories.iter().any(|t| t.role == role) {
                return Err(Error::InvalidInput(format!("no {} trajectory configured", role.name())));
            }
        }
        if self.model.history != self.windows.train.history {
            return Err(Error::InvalidInput(format!(
                "model history {} differs from the training window history {}",
                self.model.history, self.windows.train.history
            )));
        }
        if self.windows.evaluation.history < self.model.history {
            return Err(Error::InvalidInput("evaluation windows are shorter than the encoder history".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form. The output directory is left
    /// out: where artifacts land does not change what they contain.
    pub fn hash(&self) -> String {
        let canonical = Self { output_dir: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Output directory with relative paths resolved against the output root.
    pub fn output_root(&self) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => self.output_dir.clone(),
        }
    }

    /// Sets the field at dotted `path` from `value`, read as JSON when it parses
    /// and as a string otherwise.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let mut doc = serde_json::to_value(&*self)?;
        let parsed: Value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(key),
                Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::InvalidInput(format!("unknown configuration path '{path}'")))?;
        }
        *slot = parsed;
        *self = serde_json::from_value(doc).map_err(|e| Error::InvalidInput(format!("invalid value for '{path}': {e}")))?;
        Ok(())
    }
}

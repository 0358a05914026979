//! Pipeline commands and the command-line front end.
//!
//! Every command reads the same [`RunConfig`] and works inside its output
//! directory:
//!
//! ```text
//! <root>/run_config.json
//! <root>/trajectories/<role>.json, <role>_clean.csv, <role>_noisy.csv
//! <root>/datasets/<role>.json
//! <root>/models/<kind>.json, <kind>.bin, <kind>_history.csv
//! <root>/hpo/study.csv, study.json
//! <root>/metrics/<kind>_metrics.csv, <kind>_overlay.csv, box.csv
//! ```

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::{error, info};
use ndarray::s;

use crate::anode::{evaluate, load_model, save_model, train, AnodeModel, ModelKind, TrainState, TrainingSummary};
use crate::config::RunConfig;
use crate::data::{read_dataset_manifest, write_dataset_manifest, Dataset, DatasetBundle, DatasetManifest, DatasetRole, make_datasets};
use crate::dynamics::SystemModel;
use crate::hpo::{run_study, write_study_csv, write_study_manifest, Study, StudyManifest, StudyOptions};
use crate::report::{box_stats, reconstruct_frequencies, rmse_brackets, write_box_csv, write_metrics_csv, write_overlay_csv, MetricsRow, OverlaySeries, BRACKETS};
use crate::sim::{generate_step_schedule, read_trajectory, simulate, warm_start, write_trajectory, input_names, output_names, SimOptions, Trajectory, TrajectoryManifest};
use crate::{Error, Result};

/// Artifact locations under one output root.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(config: &RunConfig) -> Self {
        Self { root: config.output_root() }
    }

    pub fn trajectories(&self) -> PathBuf {
        self.root.join("trajectories")
    }

    pub fn trajectory_manifest(&self, role: DatasetRole) -> PathBuf {
        self.trajectories().join(format!("{}.json", role.name()))
    }

    pub fn dataset_manifest(&self, role: DatasetRole) -> PathBuf {
        self.root.join("datasets").join(format!("{}.json", role.name()))
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_manifest(&self, kind: ModelKind) -> PathBuf {
        self.models().join(format!("{}.json", kind.name()))
    }

    pub fn hpo(&self) -> PathBuf {
        self.root.join("hpo")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics")
    }
}

fn record_config(config: &RunConfig, paths: &RunPaths) -> Result<()> {
    fs::create_dir_all(&paths.root)?;
    let mut doc = serde_json::to_value(config)?;
    doc["config_hash"] = serde_json::Value::String(config.hash());
    fs::write(paths.root.join("run_config.json"), serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

/// Simulates one trajectory per configured role and writes clean and noisy CSVs.
pub fn cmd_simulate(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let paths = RunPaths::new(config);
    record_config(config, &paths)?;
    let model = config.case.build()?;
    let sim = &config.simulation;
    let x0 = warm_start(&model, sim.warmup, sim.dt)?;
    let mut written = Vec::new();
    for t in &sim.trajectories {
        let schedule = generate_step_schedule(&model.nominal_input(), sim.step_amplitude, t.step_period, t.seed)?;
        let noise_seed = t.seed.wrapping_add(0x5eed);
        let mut traj = simulate(&model, &x0, &schedule, t.duration, sim.dt, SimOptions::default())?;
        if let Some(snr) = sim.snr_db {
            traj = traj.with_noise(snr, noise_seed);
        }
        let mut manifest = TrajectoryManifest {
            role: t.role.name().to_string(),
            dt: sim.dt,
            duration: t.duration,
            warmup: sim.warmup,
            snr_db: sim.snr_db,
            noise_seed,
            schedule,
            inputs: input_names(&model),
            outputs: output_names(&model),
            clean_file: String::new(),
            noisy_file: String::new(),
            config_hash: config.hash(),
        };
        let path = write_trajectory(&paths.trajectories(), t.role.name(), &traj, &mut manifest)?;
        info!("wrote {} ({} instants)", path.display(), traj.len());
        written.push(path);
    }
    Ok(written)
}

fn load_trajectory(paths: &RunPaths, role: DatasetRole) -> Result<Trajectory> {
    Ok(read_trajectory(&paths.trajectory_manifest(role))?.1)
}

/// Cuts the simulated trajectories into windows and writes one manifest per dataset.
pub fn cmd_make_data(config: &RunConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let paths = RunPaths::new(config);
    record_config(config, &paths)?;
    let trajs: Vec<(DatasetRole, Trajectory)> =
        DatasetRole::ALL.iter().map(|&r| Ok((r, load_trajectory(&paths, r)?))).collect::<Result<_>>()?;
    let refs: Vec<(DatasetRole, &Trajectory)> = trajs.iter().map(|(r, t)| (*r, t)).collect();
    let bundle = make_datasets(&refs, &config.windows, config.normalize)?;
    let mut written = Vec::new();
    for role in DatasetRole::ALL {
        let ds = bundle.get(role);
        let manifest = DatasetManifest {
            role,
            trajectory: format!("../trajectories/{}.json", role.name()),
            spec: ds.spec,
            samples: ds.len(),
            starts: ds.starts.clone(),
            batch_size: bundle.batch_size,
            shuffle_seed: config.training.seed,
            normalizer: bundle.normalizer.clone(),
            config_hash: config.hash(),
        };
        let path = paths.dataset_manifest(role);
        write_dataset_manifest(&path, &manifest)?;
        info!("{} dataset: {} windows", role.name(), ds.len());
        written.push(path);
    }
    Ok(written)
}

/// Datasets rebuilt from their manifests, plus the physical-unit trajectories.
pub struct LoadedData {
    pub bundle: DatasetBundle,
    pub trajectories: Vec<(DatasetRole, Trajectory)>,
}

impl LoadedData {
    pub fn trajectory(&self, role: DatasetRole) -> &Trajectory {
        &self.trajectories.iter().find(|(r, _)| *r == role).expect("all roles loaded").1
    }
}

pub fn load_data(config: &RunConfig) -> Result<LoadedData> {
    let paths = RunPaths::new(config);
    let mut datasets = Vec::new();
    let mut trajectories = Vec::new();
    let mut normalizer = None;
    let mut batch_size = config.windows.batch_size;
    for role in DatasetRole::ALL {
        let path = paths.dataset_manifest(role);
        let m = read_dataset_manifest(&path)?;
        let traj_path = path.parent().unwrap_or(Path::new(".")).join(&m.trajectory);
        let (_, traj) = read_trajectory(&traj_path)?;
        let ds = Dataset::new(role, Arc::new(m.normalizer.source(&traj)?), m.spec, role.default_target())?;
        if ds.starts != m.starts {
            return Err(Error::InvalidInput(format!("windows of {} no longer match the trajectory", path.display())));
        }
        if role == DatasetRole::Train {
            normalizer = Some(m.normalizer.clone());
            batch_size = m.batch_size;
        }
        datasets.push(ds);
        trajectories.push((role, traj));
    }
    let mut it = datasets.into_iter();
    let bundle = DatasetBundle {
        train: it.next().expect("train"),
        validation: it.next().expect("validation"),
        test: it.next().expect("test"),
        evaluation: it.next().expect("evaluation"),
        batch_size,
        normalizer: normalizer.expect("train manifest read"),
    };
    Ok(LoadedData { bundle, trajectories })
}

fn write_history(path: &Path, state: &TrainState) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for r in &state.history {
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), r.val_loss.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub state: TrainState,
}

/// Trains one model kind on the training/validation datasets and checkpoints the best epoch.
pub fn cmd_train(config: &RunConfig, kind: ModelKind) -> Result<TrainOutcome> {
    config.validate()?;
    let paths = RunPaths::new(config);
    record_config(config, &paths)?;
    let data = load_data(config)?;
    let model_config = crate::anode::ModelConfig { kind, ..config.model.clone() };
    let mut model = AnodeModel::new(model_config, data.bundle.train.n_u())?;
    let opts = crate::anode::TrainOptions { batch_size: data.bundle.batch_size, ..config.training.clone() };
    let state = train(&mut model, &data.bundle.train, &data.bundle.validation, &opts, None)?;
    fs::create_dir_all(paths.models())?;
    let summary = TrainingSummary { best_epoch: state.best_epoch, best_val: state.best_val, epochs_run: state.epoch, history: state.history.clone() };
    let checkpoint = save_model(&paths.models(), kind.name(), &model, &data.bundle.normalizer, Some(summary), &config.hash())?;
    write_history(&paths.models().join(format!("{}_history.csv", kind.name())), &state)?;
    info!("saved {}", checkpoint.display());
    Ok(TrainOutcome { checkpoint, state })
}

/// Runs the hyperparameter study and persists the trial table, even when no trial completes.
pub fn cmd_hpo(config: &RunConfig) -> Result<Study> {
    config.validate()?;
    let paths = RunPaths::new(config);
    record_config(config, &paths)?;
    let data = load_data(config)?;
    let opts = StudyOptions {
        n_trials: config.hpo.n_trials,
        seed: config.hpo.seed,
        train: crate::anode::TrainOptions { batch_size: data.bundle.batch_size, ..config.training.clone() },
    };
    let study = run_study(&config.hpo.space, &config.model, &data.bundle, &opts)?;
    fs::create_dir_all(paths.hpo())?;
    write_study_csv(&paths.hpo().join("study.csv"), &study)?;
    let best = study.best().ok().map(|t| t.id);
    let manifest = StudyManifest { space: config.hpo.space.clone(), options: opts, best_trial: best, trials: study.trials.clone(), config_hash: config.hash() };
    write_study_manifest(&paths.hpo().join("study.json"), &manifest)?;
    study.best()?;
    Ok(study)
}

/// Scores the checkpoints of `kinds` on the evaluation dataset in physical units.
pub fn cmd_evaluate(config: &RunConfig, kinds: &[ModelKind]) -> Result<Vec<(ModelKind, Vec<MetricsRow>)>> {
    config.validate()?;
    let paths = RunPaths::new(config);
    record_config(config, &paths)?;
    let system = config.case.build()?;
    let data = load_data(config)?;
    let eval_traj = data.trajectory(DatasetRole::Evaluation);
    let ds = &data.bundle.evaluation;
    fs::create_dir_all(paths.metrics())?;
    let mut results = Vec::new();
    let mut boxes = Vec::new();
    for &kind in kinds {
        let (model, manifest) = load_model(&paths.model_manifest(kind))?;
        if manifest.normalizer != data.bundle.normalizer {
            return Err(Error::InvalidInput(format!("{} was trained on differently normalized data", paths.model_manifest(kind).display())));
        }
        let eval = evaluate(&model, ds, config.training.threads)?;
        let mut rows = Vec::with_capacity(eval.predictions.len());
        for (n, p) in eval.predictions.iter().enumerate() {
            let (start, k) = (p.start, ds.spec.horizon);
            let setpoints = eval_traj.inputs.slice(s![start + 1..=start + k, ..]);
            let predicted = data.bundle.normalizer.invert_outputs(&p.outputs);
            let truth = eval_traj.outputs.slice(s![start + 1..=start + k, ..]);
            let pred_sig = reconstruct_frequencies(&system, predicted.view(), setpoints)?;
            let true_sig = reconstruct_frequencies(&system, truth, setpoints)?;
            let rmse = rmse_brackets(&pred_sig, &true_sig, eval_traj.dt)?;
            rows.push(MetricsRow { model: kind.name().into(), sample: n, start, time: eval_traj.times[start], rmse, failed_at: p.failed_at });
            if n == 0 {
                let measured = eval_traj.noisy_outputs.slice(s![start + 1..=start + k, ..]);
                let meas_sig = reconstruct_frequencies(&system, measured, setpoints)?;
                let mut series = Vec::new();
                for (i, id) in system.graph().nodes().iter().enumerate() {
                    series.push(OverlaySeries {
                        name: format!("v_{id}"),
                        truth: true_sig.voltage.column(i).to_vec(),
                        measured: meas_sig.voltage.column(i).to_vec(),
                        predicted: pred_sig.voltage.column(i).to_vec(),
                    });
                    series.push(OverlaySeries {
                        name: format!("omega_{id}"),
                        truth: true_sig.omega.column(i).to_vec(),
                        measured: meas_sig.omega.column(i).to_vec(),
                        predicted: pred_sig.omega.column(i).to_vec(),
                    });
                }
                let times = &eval_traj.times[start + 1..=start + k];
                write_overlay_csv(&paths.metrics().join(format!("{}_overlay.csv", kind.name())), times, &series)?;
            }
        }
        for (b, bracket) in BRACKETS.iter().enumerate() {
            for (quantity, pick) in [("v", 0usize), ("omega", 1)] {
                let values: Vec<f64> = rows
                    .iter()
                    .filter_map(|r| if pick == 0 { r.rmse.voltage[b] } else { r.rmse.omega[b] })
                    .collect();
                if !values.is_empty() {
                    boxes.push((kind.name().to_string(), quantity.to_string(), bracket.name.to_string(), box_stats(&values)?));
                }
            }
        }
        write_metrics_csv(&paths.metrics().join(format!("{}_metrics.csv", kind.name())), &rows)?;
        info!("{kind}: {} evaluation responses, normalized MSE {:.6e}", rows.len(), eval.mse);
        results.push((kind, rows));
    }
    write_box_csv(&paths.metrics().join("box.csv"), &boxes)?;
    Ok(results)
}

/// The system described by the configuration (for callers that need ground truth).
pub fn build_system(config: &RunConfig) -> Result<SystemModel> {
    config.case.build()
}

#[derive(Debug, Parser)]
#[command(name = "anode", about = "Simulate droop-controlled grids and identify them with augmented neural ODEs")]
struct Cli {
    /// JSON run configuration; defaults apply to every missing field.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from the reduced desk-scale configuration instead of the full one.
    #[arg(long, global = true)]
    desk: bool,
    /// Override a configuration field, e.g. `--set training.max_epochs=200`.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for evaluation and gradient computation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (relative paths resolve against $ANODE_OUTPUT_ROOT).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the training, validation, test and evaluation trajectories.
    Simulate {
        /// Measurement SNR in dB, or `inf` to disable noise.
        #[arg(long)]
        snr_db: Option<String>,
    },
    /// Cut trajectories into windowed datasets.
    MakeData,
    /// Train one model on the training and validation datasets.
    Train {
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Random-search the hyperparameters with percentile pruning.
    Hpo {
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Score trained checkpoints on the evaluation dataset.
    Evaluate {
        /// Model to score; all trained kinds when omitted.
        #[arg(long, value_parser = parse_kind)]
        model: Option<ModelKind>,
    },
    /// Print the effective configuration as JSON.
    ShowConfig,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None if cli.desk => RunConfig::desk_scale(),
        None => RunConfig::default(),
    };
    for item in &cli.overrides {
        let (path, value) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidInput(format!("override '{item}' is not of the form PATH=VALUE")))?;
        config.set(path.trim(), value.trim())?;
    }
    if let Some(t) = cli.threads {
        config.set("training.threads", &t.to_string())?;
    }
    if let Some(out) = &cli.output {
        config.output_dir = out.clone();
    }
    match &cli.command {
        Command::Simulate { snr_db: Some(v) } => {
            let value = if v.eq_ignore_ascii_case("inf") { "null".to_string() } else { v.clone() };
            value.parse::<f64>().ok().filter(|x| x.is_finite()).or((value == "null").then_some(0.0)).ok_or_else(|| Error::InvalidInput(format!("invalid --snr-db value '{v}'")))?;
            config.set("simulation.snr_db", &value)?;
        }
        Command::Train { epochs, seed, .. } => {
            if let Some(e) = epochs {
                config.set("training.max_epochs", &e.to_string())?;
            }
            if let Some(s) = seed {
                config.set("model.seed", &s.to_string())?;
                config.set("training.seed", &s.to_string())?;
            }
        }
        Command::Hpo { trials: Some(n) } => config.set("hpo.n_trials", &n.to_string())?,
        _ => {}
    }
    config.validate()?;
    Ok(config)
}

fn trained_kinds(config: &RunConfig) -> Vec<ModelKind> {
    let paths = RunPaths::new(config);
    [ModelKind::TcnAnode, ModelKind::MlpAnode].into_iter().filter(|k| paths.model_manifest(*k).exists()).collect()
}

fn execute(cli: &Cli, config: &RunConfig) -> Result<()> {
    match &cli.command {
        Command::Simulate { .. } => {
            cmd_simulate(config)?;
        }
        Command::MakeData => {
            cmd_make_data(config)?;
        }
        Command::Train { model, .. } => {
            let out = cmd_train(config, *model)?;
            println!("{} best epoch {} validation loss {:.6e}", model, out.state.best_epoch, out.state.best_val);
        }
        Command::Hpo { .. } => {
            let study = cmd_hpo(config)?;
            let best = study.best()?;
            println!("best trial {}: {:?} test MSE {:.6e}", best.id, best.config, best.final_metric.unwrap_or(f64::NAN));
        }
        Command::Evaluate { model } => {
            let kinds = match model {
                Some(k) => vec![*k],
                None => trained_kinds(config),
            };
            if kinds.is_empty() {
                return Err(Error::MissingArtifact(RunPaths::new(config).model_manifest(ModelKind::TcnAnode)));
            }
            for (kind, rows) in cmd_evaluate(config, &kinds)? {
                println!("{kind}: {} evaluation responses", rows.len());
            }
        }
        Command::ShowConfig => println!("{}", serde_json::to_string_pretty(config)?),
    }
    Ok(())
}

/// Runs the command line; returns the process exit code (0 success, 1 runtime
/// failure, 2 usage error).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let config = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match execute(&cli, &config) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            1
        }
    }
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anode_core::config::{RunConfig, TrajectoryConfig};
use anode_core::data::{DatasetRole, WindowSpec};

fn anode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anode")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn tiny_config(dir: &Path) -> String {
    let mut c = RunConfig::desk_scale();
    let t = |role, duration, seed| TrajectoryConfig { role, duration, step_period: 1.0, seed };
    c.simulation.trajectories = vec![
        t(DatasetRole::Train, 3.0, 1),
        t(DatasetRole::Validation, 3.0, 2),
        t(DatasetRole::Test, 3.0, 3),
        t(DatasetRole::Evaluation, 6.0, 4),
    ];
    let w = WindowSpec { history: 8, horizon: 8, stride: 8, first: None };
    c.windows.train = w;
    c.windows.validation = w;
    c.windows.test = w;
    c.windows.evaluation = WindowSpec { history: 8, horizon: 150, stride: 100, first: Some(100) };
    c.model.history = 8;
    c.model.rhs_width = 8;
    c.model.encoder_width = 4;
    c.training.max_epochs = 2;
    c.training.checkpoint_every = 1;
    c.hpo.n_trials = 2;
    c.hpo.space.rhs_width = vec![8];
    c.hpo.space.rhs_layers = vec![1];
    c.output_dir = dir.join("run");
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "exit {:?}\n{}", out.status.code(), String::from_utf8_lossy(&out.stderr));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(anode(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(anode(&["train", "--model", "lstm"]).status.code(), Some(2));
    assert_eq!(anode(&["simulate", "--snr-db", "loud"]).status.code(), Some(2));
    assert_eq!(anode(&["--set", "training.nonexistent=3", "show-config"]).status.code(), Some(2));
    assert_eq!(anode(&["--set", "no-equals-sign", "show-config"]).status.code(), Some(2));
    assert_eq!(anode(&["--help"]).status.code(), Some(0));
}

#[test]
fn overrides_reach_the_configuration() {
    let out = anode(&["--desk", "--set", "training.max_epochs=7", "--threads", "3", "show-config"]);
    ok(&out);
    let c: RunConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(c.training.max_epochs, 7);
    assert_eq!(c.training.threads, 3);
    assert_eq!(c.model.history, 32);
}

#[test]
fn missing_upstream_artifact_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = anode(&["--config", &config, "make-data"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trajectories") && err.contains("train.json"), "{err}");
    let out = anode(&["--config", &config, "evaluate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_deterministic_and_infinite_snr_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&anode(&["--config", &config, "--output", a.to_str().unwrap(), "simulate"]));
    ok(&anode(&["--config", &config, "--output", b.to_str().unwrap(), "simulate"]));
    for file in ["train_clean.csv", "train_noisy.csv", "evaluation_noisy.csv", "train.json"] {
        let x = fs::read(a.join("trajectories").join(file)).unwrap();
        let y = fs::read(b.join("trajectories").join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between identical runs");
    }
    let c = dir.path().join("c");
    ok(&anode(&["--config", &config, "--output", c.to_str().unwrap(), "simulate", "--snr-db", "inf"]));
    let clean = fs::read(c.join("trajectories/test_clean.csv")).unwrap();
    let noisy = fs::read(c.join("trajectories/test_noisy.csv")).unwrap();
    assert_eq!(clean, noisy);
    assert_ne!(fs::read(a.join("trajectories/test_noisy.csv")).unwrap(), fs::read(a.join("trajectories/test_clean.csv")).unwrap());
}

#[test]
fn relative_output_resolves_against_env_root() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_anode"))
        .args(["--config", &config, "--output", "nested/run", "simulate"])
        .env("ANODE_OUTPUT_ROOT", dir.path())
        .output()
        .unwrap();
    ok(&out);
    assert!(dir.path().join("nested/run/trajectories/evaluation.json").exists());
    assert!(dir.path().join("nested/run/run_config.json").exists());
}

#[test]
fn full_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let run = dir.path().join("run");
    for step in [
        vec!["simulate"],
        vec!["make-data"],
        vec!["train", "--model", "tcn-anode"],
        vec!["train", "--model", "mlp-anode"],
        vec!["hpo"],
        vec!["evaluate"],
    ] {
        let mut args = vec!["--config", config.as_str()];
        args.extend(step);
        ok(&anode(&args));
    }
    for file in [
        "run_config.json",
        "datasets/evaluation.json",
        "models/tcn-anode.json",
        "models/tcn-anode.bin",
        "models/mlp-anode_history.csv",
        "hpo/study.csv",
        "hpo/study.json",
        "metrics/box.csv",
        "metrics/tcn-anode_overlay.csv",
    ] {
        assert!(run.join(file).exists(), "missing {file}");
    }
    let metrics = fs::read_to_string(run.join("metrics/mlp-anode_metrics.csv")).unwrap();
    // 6 s at 0.01 s, windows every 100 instants from 100 with 150 steps ahead.
    assert_eq!(metrics.lines().count(), 1 + 4);
    let history = fs::read_to_string(run.join("models/tcn-anode_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 3);
    let overlay = fs::read_to_string(run.join("metrics/tcn-anode_overlay.csv")).unwrap();
    let header = overlay.lines().next().unwrap();
    assert!(header.starts_with("time,") && header.contains("v_1") && header.contains("omega_3"), "{header}");
}

//! Acceptance suite. Runs every criterion in sequence (so runtime limits are
//! measured without competing test threads), prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.
//!
//! `ANODE_ACCEPTANCE_ONLY=1,5,8` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anode_core::anode::{evaluate, load_model, loss_and_gradient, AnodeModel, ModelConfig, ModelKind};
use anode_core::cases;
use anode_core::cli::{cmd_evaluate, cmd_make_data, cmd_simulate, cmd_train, load_data, RunPaths};
use anode_core::config::RunConfig;
use anode_core::data::{window_indices, Dataset, DatasetRole, Normalizer, TargetSource, WindowSpec};
use anode_core::grid::{build_admittance, power_injections, BusElectricalState, Edge, NetworkGraph};
use anode_core::hpo::{sample_config, SearchSpace, Study, TrialStatus};
use anode_core::nn::{five_point_coordinate, min_blocks, receptive_field, relative_error, tcn_forward, ParameterStore, Tcn};
use anode_core::report::MetricsRow;
use anode_core::sim::{add_noise, empirical_snr_db, generate_step_schedule, settle, simulate, warm_start, Rk4, SimOptions};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

// 1. Trigonometric injections against the complex product, 1000 random networks.
fn power_flow_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=10usize);
        let ids: Vec<u32> = (1..=n as u32).collect();
        let mut edges = Vec::new();
        let mut linked = BTreeSet::new();
        for i in 1..n {
            let j = rng.random_range(0..i);
            linked.insert((j, i));
            edges.push(Edge::series(ids[j], ids[i], Complex64::new(rng.random_range(0.1..5.0), rng.random_range(-20.0..-0.5))));
        }
        for i in 0..n {
            for j in i + 2..n {
                if !linked.contains(&(i, j)) && rng.random_bool(0.2) {
                    edges.push(Edge::series(ids[i], ids[j], Complex64::new(rng.random_range(0.1..5.0), rng.random_range(-20.0..-0.5))));
                }
            }
            if rng.random_bool(0.5) {
                edges.push(Edge::shunt(ids[i], Complex64::new(rng.random_range(0.0..0.5), rng.random_range(-0.2..0.2))));
            }
        }
        let graph = NetworkGraph::new(ids.clone(), &edges).expect("valid random network");
        let state = BusElectricalState {
            v: (0..n).map(|_| rng.random_range(0.8..1.2)).collect(),
            delta: (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        };
        let (p, q) = power_injections(&state, &graph).expect("matching dimensions");
        let y = build_admittance(&graph);
        let vt: Vec<Complex64> = state.v.iter().zip(&state.delta).map(|(v, d)| Complex64::from_polar(*v, *d)).collect();
        for i in 0..n {
            let current: Complex64 = (0..n).map(|j| y.get(i, j) * vt[j]).sum();
            let s = vt[i] * current.conj();
            worst = worst.max((s.re - p[i]).abs()).max((s.im - q[i]).abs());
        }
    }
    let dt = t0.elapsed();
    check(worst < 1e-10 && within(dt, 5.0), format!("max |trig - complex| = {worst:.3e} (< 1e-10), {:.2?} (< 5 s)", dt))
}

fn rk4_terminal(f: impl Fn(&[f64], &mut [f64]), x0: &[f64], t: f64, dt: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    for _ in 0..(t / dt).round() as usize {
        rk.step(&f, &mut x, dt);
    }
    x
}

fn expm(a: &Array2<f64>) -> Array2<f64> {
    let norm = a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * a.nrows() as f64;
    let squarings = norm.log2().ceil().max(0.0) as u32 + 4;
    let scaled = a / 2f64.powi(squarings as i32);
    let mut term = Array2::<f64>::eye(a.nrows());
    let mut sum = term.clone();
    for k in 1..30 {
        term = term.dot(&scaled) / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = sum.dot(&sum);
    }
    sum
}

// 2. Halving dt divides the terminal error by about 16.
fn rk4_order() -> Outcome {
    let t0 = Instant::now();
    let scalar = |dt: f64| (rk4_terminal(|x, d| d[0] = -x[0], &[1.0], 1.0, dt)[0] - (-1.0f64).exp()).abs();
    let scalar_ratio = scalar(0.1) / scalar(0.05);

    let model = cases::two_node();
    let u = model.nominal_input();
    let x_eq = settle(&model, &u, 0.01, 1e-12, 200.0).expect("two-node equilibrium");
    let n = x_eq.len();
    let mut a = Array2::zeros((n, n));
    let eps = 1e-6;
    for j in 0..n {
        let mut xp = x_eq.clone();
        let mut xm = x_eq.clone();
        xp[j] += eps;
        xm[j] -= eps;
        let (fp, fm) = (model.system_rhs(&xp, &u).unwrap(), model.system_rhs(&xm, &u).unwrap());
        for i in 0..n {
            a[[i, j]] = (fp[i] - fm[i]) / (2.0 * eps);
        }
    }
    let mut d0 = vec![0.0; n];
    d0[3] = 0.3;
    d0[4] = 0.5;
    let horizon = 2.0;
    let exact = expm(&(&a * horizon)).dot(&ndarray::Array1::from(d0.clone()));
    let linear = |dt: f64| {
        let end = rk4_terminal(|x, d| d.iter_mut().zip(a.dot(&ndarray::ArrayView1::from(x))).for_each(|(o, v)| *o = v), &d0, horizon, dt);
        end.iter().zip(exact.iter()).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()))
    };
    let grid_ratio = linear(0.02) / linear(0.01);
    let dt = t0.elapsed();
    let ok = |r: f64| (13.0..=19.0).contains(&r);
    check(
        ok(scalar_ratio) && ok(grid_ratio) && within(dt, 5.0),
        format!("error ratio x'=-x {scalar_ratio:.2}, linearized 2-node {grid_ratio:.2} (in [13, 19]), {:.2?} (< 5 s)", dt),
    )
}

// 3. Ten seconds at equilibrium under constant input.
fn equilibrium_hold() -> Outcome {
    let t0 = Instant::now();
    let model = cases::three_node();
    let u = model.nominal_input();
    let x_eq = settle(&model, &u, 0.01, 1e-13, 200.0).expect("three-node equilibrium");
    let schedule = generate_step_schedule(&u, 0.0, 5.0, 0).unwrap();
    let traj = simulate(&model, &x_eq, &schedule, 10.0, 0.01, SimOptions::default()).unwrap();
    let drift = traj
        .states
        .expect("simulated states")
        .rows()
        .into_iter()
        .flat_map(|row| row.iter().zip(&x_eq).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);
    let dt = t0.elapsed();
    check(drift < 1e-9 && within(dt, 5.0), format!("max drift {drift:.3e} (< 1e-9), {:.2?} (< 5 s)", dt))
}

// 4. End-to-end loss gradient against central differences.
fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let system = cases::two_node();
    let x0 = warm_start(&system, 5.0, 0.01).unwrap();
    let schedule = generate_step_schedule(&system.nominal_input(), 0.2, 0.2, 11).unwrap();
    let traj = simulate(&system, &x0, &schedule, 1.0, 0.01, SimOptions::default()).unwrap().with_noise(25.0, 12);
    let source = Arc::new(Normalizer::fit(&traj).source(&traj).unwrap());
    let ds = Dataset::new(DatasetRole::Train, source, WindowSpec::new(8, 4, 20).unwrap(), TargetSource::Noisy).unwrap();
    let config = ModelConfig { kind: ModelKind::TcnAnode, rhs_layers: 1, rhs_width: 8, encoder_width: 4, history: 8, rhs_output_scale: 1.0, seed: 13, ..ModelConfig::default() };
    let model = AnodeModel::new(config, 2).unwrap();
    let samples: Vec<_> = ds.samples().collect();
    let theta = model.params().to_vec();
    let (_, grad) = loss_and_gradient(&model, &theta, &samples, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let i = rng.random_range(0..theta.len());
        let fd = five_point_coordinate(|p| loss_and_gradient(&model, p, &samples, 1).unwrap().0, &theta, i, 1e-4);
        worst = worst.max(relative_error(grad[i], fd, 1e-8));
    }
    let dt = t0.elapsed();
    check(
        worst < 1e-4 && within(dt, 60.0),
        format!("max relative error {worst:.3e} over 50 coordinates of {} (< 1e-4), {} windows, {:.2?} (< 60 s)", theta.len(), samples.len(), dt),
    )
}

fn probe_tcn(blocks: usize) -> (usize, bool, bool, bool) {
    let mut store = ParameterStore::new();
    let net = Tcn::new(&mut store, "probe", 2, 6, blocks, 2, 1).unwrap();
    store.init(17 + blocks as u64);
    let r = net.receptive_field();
    let len = r + 6;
    let mut rng = ChaCha8Rng::seed_from_u64(blocks as u64);
    let base: Vec<f64> = (0..2 * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = tcn_forward(&net, &store.values, &base, len).unwrap();
    let perturbed = |pos: usize| {
        let mut s = base.clone();
        s[pos] += 1.0;
        s[len + pos] -= 1.0;
        tcn_forward(&net, &store.values, &s, len).unwrap()
    };
    let last = len - 1;
    // Lag R-1 from the last instant must reach it; lag R must not.
    let inside = perturbed(last + 1 - r)[last] != out[last];
    let outside = perturbed(last - r)[last] == out[last];
    // Changing instant t leaves every earlier output bit-identical.
    let t = len / 2;
    let after = perturbed(t);
    let causal = (0..t).all(|k| after[k].to_bits() == out[k].to_bits()) && after[t] != out[t];
    (r, inside, outside, causal)
}

// 5. Causality, receptive-field sharpness and block count.
fn tcn_receptive_field() -> Outcome {
    let t0 = Instant::now();
    let (r3, in3, out3, c3) = probe_tcn(3);
    let (r6, in6, out6, c6) = probe_tcn(6);
    let formula = receptive_field(2, 3) == 15 && receptive_field(2, 6) == 127;
    let b = min_blocks(2, 64).unwrap();
    let dt = t0.elapsed();
    check(
        r3 == 15 && r6 == 127 && formula && in3 && out3 && in6 && out6 && c3 && c6 && b == 6 && within(dt, 10.0),
        format!("R = {r3}, {r6}; lag R-1 reaches: {in3}/{in6}; lag R blocked: {out3}/{out6}; causal: {c3}/{c6}; B(H=64) = {b}; {:.2?} (< 10 s)", dt),
    )
}

// 6. Window counts and alignment.
fn windowing() -> Outcome {
    let t0 = Instant::now();
    let train = window_indices(25001, &WindowSpec::new(64, 64, 16).unwrap()).len();
    let spec = WindowSpec::evaluation_default();
    let starts = window_indices(101001, &spec);
    let schedule = generate_step_schedule(&[0.5, 0.3, 0.2], 0.2, 10.0, 5).unwrap();
    let u = schedule.inputs(101001, 0.01).unwrap();
    let aligned = starts.iter().all(|&s| s % 1000 == 0 && u.row(s) != u.row(s - 1));
    let dt = t0.elapsed();
    check(
        train == 1555 && starts.len() == 100 && aligned && within(dt, 1.0),
        format!("{train} training windows (1555), {} evaluation windows (100), aligned to steps: {aligned}, {:.2?} (< 1 s)", starts.len(), dt),
    )
}

// 7. Realized SNR of the measurement noise.
fn noise_calibration() -> Outcome {
    let t0 = Instant::now();
    let model = cases::three_node();
    let x0 = warm_start(&model, 5.0, 0.01).unwrap();
    let schedule = generate_step_schedule(&model.nominal_input(), 0.2, 10.0, 21).unwrap();
    let traj = simulate(&model, &x0, &schedule, 250.0, 0.01, SimOptions::default()).unwrap();
    let noisy = add_noise(&traj.outputs, 25.0, 22);
    let snr = empirical_snr_db(&traj.outputs, &noisy);
    let worst = snr.iter().fold(0.0f64, |m, s| m.max((s - 25.0).abs()));
    let dt = t0.elapsed();
    check(
        traj.len() == 25001 && worst <= 0.5 && within(dt, 5.0),
        format!("{} samples, per-channel SNR {:?} dB, max deviation {worst:.3} dB (<= 0.5), {:.2?} (< 5 s)", traj.len(), snr.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(), dt),
    )
}

// 8. Hand-built curves through the pruner.
fn pruner_table() -> Outcome {
    let t0 = Instant::now();
    let curves: [&[f64]; 8] = [
        &[3.0, 2.0, 1.0],
        &[4.0, 3.0, 2.0],
        &[2.0, 1.5, 1.2],
        &[10.0, 9.0, 8.0],
        &[2.75, 1.8, 0.9],
        &[2.8, 0.1, 0.1],
        &[2.0, 1.9, 0.1],
        &[1.0, 1.0, f64::NAN],
    ];
    let expected = [
        (TrialStatus::Complete, None),
        (TrialStatus::Complete, None),
        (TrialStatus::Complete, None),
        (TrialStatus::Complete, None),
        (TrialStatus::Complete, None),
        (TrialStatus::Pruned, Some(10)),
        (TrialStatus::Pruned, Some(20)),
        (TrialStatus::Pruned, Some(30)),
    ];
    let config = sample_config(&SearchSpace::default(), &mut ChaCha8Rng::seed_from_u64(0));
    let mut study = Study::default();
    for curve in curves {
        study.run_trial(config, 0, |_, report| {
            for (i, m) in curve.iter().enumerate() {
                if report(10 * (i + 1), *m) {
                    return Ok(*m);
                }
            }
            Ok(*curve.last().unwrap())
        });
    }
    let got: Vec<_> = study.trials.iter().map(|t| (t.status, t.pruned_at)).collect();
    let best = study.best().map(|t| t.id).ok();
    let dt = t0.elapsed();
    check(
        got == expected && best == Some(4) && within(dt, 1.0),
        format!("table {:?}, best trial {best:?} (4), {:.2?} (< 1 s)", got, dt),
    )
}

struct DeskRun {
    rows: Vec<(ModelKind, Vec<MetricsRow>)>,
    elapsed: Duration,
    config: RunConfig,
    _dir: tempfile::TempDir,
}

fn desk_run() -> anode_core::Result<DeskRun> {
    let t0 = Instant::now();
    let dir = tempfile::tempdir()?;
    let mut config = RunConfig::desk_scale();
    config.output_dir = dir.path().to_path_buf();
    cmd_simulate(&config)?;
    cmd_make_data(&config)?;
    for kind in [ModelKind::TcnAnode, ModelKind::MlpAnode] {
        let out = cmd_train(&config, kind)?;
        eprintln!("  {kind}: best epoch {} of {}, validation loss {:.4e}", out.state.best_epoch, out.state.epoch, out.state.best_val);
    }
    let rows = cmd_evaluate(&config, &[ModelKind::TcnAnode, ModelKind::MlpAnode])?;
    Ok(DeskRun { rows, elapsed: t0.elapsed(), config, _dir: dir })
}

fn lower_fraction(tcn: &[MetricsRow], mlp: &[MetricsRow], pick: impl Fn(&MetricsRow) -> Option<f64>) -> f64 {
    let wins = tcn
        .iter()
        .zip(mlp)
        .filter(|(a, b)| {
            let (a, b) = (pick(a).unwrap_or(f64::INFINITY), pick(b).unwrap_or(f64::INFINITY));
            a < b
        })
        .count();
    wins as f64 / tcn.len() as f64
}

// 9. Directional comparison of the two encoders at desk scale.
fn desk_identification(run: &DeskRun) -> Outcome {
    let tcn = &run.rows[0].1;
    let mlp = &run.rows[1].1;
    let n = tcn.len();
    let v_frac = lower_fraction(tcn, mlp, |r| r.rmse.voltage[2]);
    let w_frac = lower_fraction(tcn, mlp, |r| r.rmse.omega[2]);
    let worst_v: [f64; 3] = std::array::from_fn(|b| tcn.iter().map(|r| r.rmse.voltage[b].unwrap_or(f64::INFINITY)).fold(0.0, f64::max));
    let starts_match = tcn.iter().zip(mlp).all(|(a, b)| a.start == b.start);
    let budget = run.config.training.max_epochs <= 300;
    check(
        n >= 20 && starts_match && budget && v_frac >= 0.75 && w_frac >= 0.75 && worst_v.iter().all(|v| *v < 5e-2) && run.elapsed.as_secs_f64() <= 1800.0,
        format!(
            "{n} responses; TCN lower long-term RMSE: v {:.0}%, omega {:.0}% (>= 75%); TCN max v RMSE per bracket {:?} pu (< 5e-2); {:.0?} (<= 30 min)",
            100.0 * v_frac,
            100.0 * w_frac,
            worst_v.map(|v| format!("{v:.2e}")),
            run.elapsed
        ),
    )
}

// 10. Best-validation restore and training progress.
fn training_sanity(run: &DeskRun) -> Outcome {
    let data = load_data(&run.config).expect("desk datasets");
    let paths = RunPaths::new(&run.config);
    let mut details = Vec::new();
    let mut pass = true;
    for kind in [ModelKind::TcnAnode, ModelKind::MlpAnode] {
        let (model, manifest) = load_model(&paths.model_manifest(kind)).expect("checkpoint");
        let history = manifest.training.expect("training summary").history;
        let min_val = history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        let val = evaluate(&model, &data.bundle.validation, 1).unwrap().mse;
        let train = evaluate(&model, &data.bundle.train, 1).unwrap().mse;
        let first = history[0].train_loss;
        let is_min = (val - min_val).abs() <= 1e-12 * min_val.abs();
        let ratio = train / first;
        pass &= is_min && ratio <= 0.10;
        details.push(format!("{kind}: val {val:.6e} vs min {min_val:.6e} ({is_min}), train/epoch0 {ratio:.3} (<= 0.10)"));
    }
    check(pass, details.join("; "))
}

fn main() -> ExitCode {
    let only: Option<BTreeSet<usize>> = std::env::var("ANODE_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |c: usize| only.as_ref().is_none_or(|set| set.contains(&c));
    let quick: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "power-flow oracle equivalence", power_flow_oracle),
        (2, "RK4 order", rk4_order),
        (3, "equilibrium hold", equilibrium_hold),
        (4, "gradient correctness", gradient_check),
        (5, "TCN causality and receptive field", tcn_receptive_field),
        (6, "windowing arithmetic", windowing),
        (7, "noise calibration", noise_calibration),
        (8, "pruner determinism", pruner_table),
    ];
    let mut failures = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!("{} criterion {id:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    };
    for (id, name, f) in quick {
        if wanted(id) {
            report(id, name, f());
        }
    }
    if wanted(9) || wanted(10) {
        match desk_run() {
            Ok(run) => {
                if wanted(9) {
                    report(9, "desk-scale identification", desk_identification(&run));
                }
                if wanted(10) {
                    report(10, "training sanity", training_sanity(&run));
                }
            }
            Err(e) => {
                for id in [9, 10].into_iter().filter(|c| wanted(*c)) {
                    report(id, "desk-scale run", check(false, format!("pipeline failed: {e}")));
                }
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! History/horizon windows over trajectories, the four datasets built from
//! them, per-channel normalization and shuffled batching.
//!
//! A window starting at index `s` carries the inputs `u(t_{s-H}) .. u(t_{s+K})`,
//! the outputs `y(t_{s-H+1}) .. y(t_s)` and the targets `y(t_{s+1}) .. y(t_{s+K})`.
//! Samples are views into the shared source arrays, so overlapping windows
//! never copy data.

mod manifest;

use std::sync::Arc;

use log::warn;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sim::Trajectory;
use crate::{Error, Result};

pub use manifest::{read_dataset_manifest, write_dataset_manifest, DatasetManifest};

/// Window geometry in sampling instants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub history: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Index of the first window start; defaults to `history`.
    #[serde(default)]
    pub first: Option<usize>,
}

impl WindowSpec {
    pub fn new(history: usize, horizon: usize, stride: usize) -> Result<Self> {
        let spec = Self { history, horizon, stride, first: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn starting_at(mut self, first: usize) -> Result<Self> {
        self.first = Some(first);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.history == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::InvalidInput("window history, horizon and stride must be at least 1".into()));
        }
        if self.first_start() < self.history {
            return Err(Error::InvalidInput(format!("first window start {} precedes a history of {}", self.first_start(), self.history)));
        }
        Ok(())
    }

    pub fn first_start(&self) -> usize {
        self.first.unwrap_or(self.history)
    }

    /// Training and test geometry: H = K = 64, stride 16.
    pub fn training_default() -> Self {
        Self { history: 64, horizon: 64, stride: 16, first: None }
    }

    /// Evaluation geometry: 5 s responses starting at every 10 s input step.
    pub fn evaluation_default() -> Self {
        Self { history: 64, horizon: 500, stride: 1000, first: Some(1000) }
    }
}

/// All window starts `s_n = first + (n - 1) * stride` with `s_n + K` inside the trajectory.
pub fn window_indices(instants: usize, spec: &WindowSpec) -> Vec<usize> {
    let first = spec.first_start();
    if instants == 0 || first + spec.horizon > instants - 1 {
        warn!("trajectory of {instants} instants is too short for any window (first start {first}, horizon {})", spec.horizon);
        return Vec::new();
    }
    let last = instants - 1 - spec.horizon;
    (first..=last).step_by(spec.stride).collect()
}

/// Normalized (or raw) signal arrays that windows slice into.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSource {
    pub inputs: Array2<f64>,
    pub noisy: Array2<f64>,
    pub clean: Array2<f64>,
}

impl WindowSource {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self { inputs: traj.inputs.clone(), noisy: traj.noisy_outputs.clone(), clean: traj.outputs.clone() }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Which outputs a dataset scores predictions against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSource {
    Noisy,
    Clean,
}

/// One `(xi, eta)` pair as views into its source.
#[derive(Clone, Copy, Debug)]
pub struct Sample<'a> {
    pub start: usize,
    /// `u(t_{s-H}) .. u(t_{s+K})`, `H + K + 1` rows.
    pub inputs: ArrayView2<'a, f64>,
    /// Measured `y(t_{s-H+1}) .. y(t_s)`, `H` rows.
    pub history: ArrayView2<'a, f64>,
    /// `y(t_{s+1}) .. y(t_{s+K})` from the dataset's target source.
    pub target: ArrayView2<'a, f64>,
    /// Noise-free `y(t_{s+1}) .. y(t_{s+K})`.
    pub clean_target: ArrayView2<'a, f64>,
}

impl Sample<'_> {
    pub fn history_len(&self) -> usize {
        self.history.nrows()
    }

    pub fn horizon(&self) -> usize {
        self.target.nrows()
    }

    /// `x^o(t_s)`, the last measured output.
    pub fn initial_output(&self) -> Vec<f64> {
        self.history.row(self.history.nrows() - 1).to_vec()
    }

    /// Inputs `u(t_{s-H}) .. u(t_{s-1})` paired with the history outputs.
    pub fn history_inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.slice(s![..self.history_len(), ..])
    }

    /// Inputs `u(t_s) .. u(t_{s+K-1})` driving the rollout.
    pub fn rollout_inputs(&self) -> ArrayView2<'_, f64> {
        let h = self.history_len();
        self.inputs.slice(s![h..h + self.horizon(), ..])
    }
}

/// Slices the window starting at `start` out of `source`.
pub fn build_sample<'a>(source: &'a WindowSource, start: usize, spec: &WindowSpec, target: TargetSource) -> Result<Sample<'a>> {
    let (h, k) = (spec.history, spec.horizon);
    if start < h || start + k >= source.len() {
        return Err(Error::InvalidInput(format!(
            "window at {start} with history {h} and horizon {k} exceeds a trajectory of {} instants",
            source.len()
        )));
    }
    let outputs = match target {
        TargetSource::Noisy => &source.noisy,
        TargetSource::Clean => &source.clean,
    };
    Ok(Sample {
        start,
        inputs: source.inputs.slice(s![start - h..=start + k, ..]),
        history: source.noisy.slice(s![start + 1 - h..=start, ..]),
        target: outputs.slice(s![start + 1..=start + k, ..]),
        clean_target: source.clean.slice(s![start + 1..=start + k, ..]),
    })
}

/// Per-channel z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub output_mean: Vec<f64>,
    pub output_scale: Vec<f64>,
}

fn column_stats(a: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    a.axis_iter(Axis(1))
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 })
        })
        .unzip()
}

fn transform(a: &Array2<f64>, mean: &[f64], scale: &[f64], forward: bool) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        for ((v, m), s) in row.iter_mut().zip(mean).zip(scale) {
            *v = if forward { (*v - m) / s } else { *v * s + m };
        }
    }
    out
}

impl Normalizer {
    /// Leaves every channel unchanged.
    pub fn identity(n_u: usize, n_y: usize) -> Self {
        Self { input_mean: vec![0.0; n_u], input_scale: vec![1.0; n_u], output_mean: vec![0.0; n_y], output_scale: vec![1.0; n_y] }
    }

    /// Fits on the inputs and measured (noisy) outputs of one trajectory.
    pub fn fit(traj: &Trajectory) -> Self {
        let (input_mean, input_scale) = column_stats(&traj.inputs);
        let (output_mean, output_scale) = column_stats(&traj.noisy_outputs);
        Self { input_mean, input_scale, output_mean, output_scale }
    }

    pub fn apply_inputs(&self, u: &Array2<f64>) -> Array2<f64> {
        transform(u, &self.input_mean, &self.input_scale, true)
    }

    pub fn apply_outputs(&self, y: &Array2<f64>) -> Array2<f64> {
        transform(y, &self.output_mean, &self.output_scale, true)
    }

    pub fn invert_inputs(&self, u: &Array2<f64>) -> Array2<f64> {
        transform(u, &self.input_mean, &self.input_scale, false)
    }

    pub fn invert_outputs(&self, y: &Array2<f64>) -> Array2<f64> {
        transform(y, &self.output_mean, &self.output_scale, false)
    }

    pub fn source(&self, traj: &Trajectory) -> Result<WindowSource> {
        if traj.inputs.ncols() != self.input_mean.len() || traj.outputs.ncols() != self.output_mean.len() {
            return Err(Error::DimensionMismatch {
                context: "normalizer channels",
                expected: self.input_mean.len() + self.output_mean.len(),
                actual: traj.inputs.ncols() + traj.outputs.ncols(),
            });
        }
        Ok(WindowSource {
            inputs: self.apply_inputs(&traj.inputs),
            noisy: self.apply_outputs(&traj.noisy_outputs),
            clean: self.apply_outputs(&traj.outputs),
        })
    }
}

/// Windows over one shared source.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub role: DatasetRole,
    pub spec: WindowSpec,
    pub target: TargetSource,
    pub source: Arc<WindowSource>,
    pub starts: Vec<usize>,
}

impl Dataset {
    pub fn new(role: DatasetRole, source: Arc<WindowSource>, spec: WindowSpec, target: TargetSource) -> Result<Self> {
        spec.validate()?;
        let starts = window_indices(source.len(), &spec);
        Ok(Self { role, spec, target, source, starts })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn sample(&self, n: usize) -> Sample<'_> {
        build_sample(&self.source, self.starts[n], &self.spec, self.target).expect("window starts are in range by construction")
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample<'_>> {
        (0..self.len()).map(|n| self.sample(n))
    }

    pub fn n_u(&self) -> usize {
        self.source.inputs.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.source.noisy.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetRole {
    Train,
    Validation,
    Test,
    Evaluation,
}

impl DatasetRole {
    pub const ALL: [DatasetRole; 4] = [DatasetRole::Train, DatasetRole::Validation, DatasetRole::Test, DatasetRole::Evaluation];

    pub fn name(self) -> &'static str {
        match self {
            DatasetRole::Train => "train",
            DatasetRole::Validation => "validation",
            DatasetRole::Test => "test",
            DatasetRole::Evaluation => "evaluation",
        }
    }

    pub fn default_target(self) -> TargetSource {
        match self {
            DatasetRole::Evaluation => TargetSource::Clean,
            _ => TargetSource::Noisy,
        }
    }
}

impl std::str::FromStr for DatasetRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| Error::InvalidInput(format!("unknown dataset role '{s}'")))
    }
}

/// Window geometry for every role.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpecs {
    pub train: WindowSpec,
    pub validation: WindowSpec,
    pub test: WindowSpec,
    pub evaluation: WindowSpec,
    pub batch_size: usize,
}

impl Default for DatasetSpecs {
    fn default() -> Self {
        let t = WindowSpec::training_default();
        Self { train: t, validation: t, test: t, evaluation: WindowSpec::evaluation_default(), batch_size: 256 }
    }
}

impl DatasetSpecs {
    pub fn get(&self, role: DatasetRole) -> &WindowSpec {
        match role {
            DatasetRole::Train => &self.train,
            DatasetRole::Validation => &self.validation,
            DatasetRole::Test => &self.test,
            DatasetRole::Evaluation => &self.evaluation,
        }
    }
}

/// The four datasets with the normalizer fit on the training trajectory.
#[derive(Clone, Debug)]
pub struct DatasetBundle {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub evaluation: Dataset,
    pub batch_size: usize,
    pub normalizer: Normalizer,
}

impl DatasetBundle {
    pub fn get(&self, role: DatasetRole) -> &Dataset {
        match role {
            DatasetRole::Train => &self.train,
            DatasetRole::Validation => &self.validation,
            DatasetRole::Test => &self.test,
            DatasetRole::Evaluation => &self.evaluation,
        }
    }
}

/// Builds the bundle from one trajectory per role. Statistics come from the
/// training trajectory alone and are applied unchanged to the others.
pub fn make_datasets(trajectories: &[(DatasetRole, &Trajectory)], specs: &DatasetSpecs, normalize: bool) -> Result<DatasetBundle> {
    let find = |role: DatasetRole| {
        trajectories
            .iter()
            .find(|(r, _)| *r == role)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::InvalidInput(format!("missing {} trajectory", role.name())))
    };
    if specs.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    let train = find(DatasetRole::Train)?;
    let normalizer = if normalize { Normalizer::fit(train) } else { Normalizer::identity(train.inputs.ncols(), train.outputs.ncols()) };
    let build = |role: DatasetRole| -> Result<Dataset> {
        let source = Arc::new(normalizer.source(find(role)?)?);
        Dataset::new(role, source, *specs.get(role), role.default_target())
    };
    Ok(DatasetBundle {
        train: build(DatasetRole::Train)?,
        validation: build(DatasetRole::Validation)?,
        test: build(DatasetRole::Test)?,
        evaluation: build(DatasetRole::Evaluation)?,
        batch_size: specs.batch_size,
        normalizer,
    })
}

/// Sample indices of every batch in one epoch, shuffled by `(seed, epoch)`.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    order.shuffle(&mut rng);
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn ramp_source(t: usize, n_u: usize, n_y: usize) -> WindowSource {
        let inputs = Array2::from_shape_fn((t, n_u), |(k, c)| (k * 10 + c) as f64);
        let clean = Array2::from_shape_fn((t, n_y), |(k, c)| (k * 100 + c) as f64);
        let noisy = clean.mapv(|v| v + 0.5);
        WindowSource { inputs, noisy, clean }
    }

    fn enumerate(t: usize, spec: &WindowSpec) -> Vec<usize> {
        let mut out = Vec::new();
        let mut s = spec.first_start();
        while s + spec.horizon <= t - 1 {
            out.push(s);
            s += spec.stride;
        }
        out
    }

    #[test]
    fn window_counts() {
        let spec = WindowSpec::training_default();
        let idx = window_indices(25001, &spec);
        assert_eq!(idx.len(), 1555);
        assert_eq!(idx, enumerate(25001, &spec));
        let tight = WindowSpec::new(3, 2, 5).unwrap();
        assert_eq!(window_indices(6, &tight), vec![3]);
        assert!(window_indices(5, &tight).is_empty());
        let eval = WindowSpec::evaluation_default();
        let idx = window_indices(101001, &eval);
        assert_eq!(idx.len(), 100);
        assert!(idx.iter().enumerate().all(|(n, &s)| s == 1000 * (n + 1)));
    }

    #[test]
    fn smallest_window_layout() {
        let src = ramp_source(5, 1, 2);
        let spec = WindowSpec::new(1, 1, 1).unwrap();
        let s = build_sample(&src, 1, &spec, TargetSource::Noisy).unwrap();
        assert_eq!(s.inputs.column(0).to_vec(), vec![0.0, 10.0, 20.0]);
        assert_eq!(s.history.row(0).to_vec(), vec![100.5, 101.5]);
        assert_eq!(s.target.row(0).to_vec(), vec![200.5, 201.5]);
        assert_eq!(s.clean_target.row(0).to_vec(), vec![200.0, 201.0]);
        assert_eq!(s.rollout_inputs().column(0).to_vec(), vec![10.0]);
        assert!(build_sample(&src, 0, &spec, TargetSource::Noisy).is_err());
        assert!(build_sample(&src, 4, &spec, TargetSource::Noisy).is_err());
    }

    #[test]
    fn overlapping_windows_share_storage() {
        let src = ramp_source(40, 2, 2);
        let spec = WindowSpec::new(4, 4, 2).unwrap();
        let a = build_sample(&src, 6, &spec, TargetSource::Noisy).unwrap();
        let b = build_sample(&src, 8, &spec, TargetSource::Noisy).unwrap();
        assert!(std::ptr::eq(&a.target[[2, 0]], &b.target[[0, 0]]));
        assert!(std::ptr::eq(&a.inputs[[2, 1]], &b.inputs[[0, 1]]));
    }

    #[test]
    fn normalizer_roundtrip() {
        let src = ramp_source(50, 2, 3);
        let traj = Trajectory { dt: 0.1, times: (0..50).map(|k| k as f64 * 0.1).collect(), states: None, inputs: src.inputs.clone(), outputs: src.clean.clone(), noisy_outputs: src.noisy.clone() };
        let n = Normalizer::fit(&traj);
        let z = n.apply_outputs(&traj.outputs);
        let back = n.invert_outputs(&z);
        for (a, b) in back.iter().zip(traj.outputs.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        let zn = n.apply_outputs(&traj.noisy_outputs);
        for col in zn.axis_iter(Axis(1)) {
            assert!(col.mean().unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn batches_cover_and_repeat() {
        let b = epoch_batches(1555, 256, 7, 3);
        assert_eq!(b.len(), 7);
        assert_eq!(b.last().unwrap().len(), 19);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..1555).collect::<Vec<_>>());
        assert_eq!(b, epoch_batches(1555, 256, 7, 3));
        assert_ne!(b, epoch_batches(1555, 256, 7, 4));
    }

    #[test]
    fn invalid_specs() {
        assert!(WindowSpec::new(0, 1, 1).is_err());
        assert!(WindowSpec::new(4, 1, 1).unwrap().starting_at(2).is_err());
    }
}

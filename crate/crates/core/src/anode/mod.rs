//! Augmented neural ODE identification models.
//!
//! The state of a model has the same layout as the ground-truth machine state:
//! per node one latent (standing in for the unmeasured angle) followed by the
//! two measured outputs. At a window start the measured slots are copied from
//! the last observation and only the latents come from an encoder. The TCN
//! variant encodes a history of inputs and outputs; the MLP baseline sees the
//! single instant `t_s`. Both integrate a learned right-hand side `f(x, u)` with
//! one RK4 step per sampling interval while holding `u` constant.

mod checkpoint;
mod train;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::dynamics::{OUTPUTS_PER_NODE, STATES_PER_NODE};
use crate::nn::{min_blocks, Activation, Mlp, ParameterStore, Tape, Tcn, Var};
use crate::{Error, Result};

pub use checkpoint::{load_model, save_model, ModelManifest, TrainingSummary};
pub use train::{evaluate, loss_and_gradient, train, EpochRecord, Evaluation, HookAction, Prediction, TrainHook, TrainOptions, TrainState};

/// Rollouts whose state leaves this box are reported as failed.
pub const ROLLOUT_BOUND: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "tcn-anode")]
    TcnAnode,
    #[serde(rename = "mlp-anode")]
    MlpAnode,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TcnAnode => "tcn-anode",
            ModelKind::MlpAnode => "mlp-anode",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcn-anode" => Ok(ModelKind::TcnAnode),
            "mlp-anode" => Ok(ModelKind::MlpAnode),
            other => Err(Error::InvalidInput(format!("unknown model kind '{other}' (expected tcn-anode or mlp-anode)"))),
        }
    }
}

/// Architecture and initialization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden layers of the right-hand side network; 0 makes it affine.
    pub rhs_layers: usize,
    pub rhs_width: usize,
    /// TCN hidden channels, or the hidden width of the MLP encoder.
    pub encoder_width: usize,
    pub kernel: usize,
    /// Residual blocks; the smallest count covering `history` when absent.
    pub blocks: Option<usize>,
    pub activation: Activation,
    /// Multiplier on the initial range of the right-hand side's output layer.
    pub rhs_output_scale: f64,
    pub history: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::TcnAnode,
            rhs_layers: 2,
            rhs_width: 128,
            encoder_width: 64,
            kernel: 2,
            blocks: None,
            activation: Activation::Softplus,
            rhs_output_scale: 0.01,
            history: 64,
            dt: 0.01,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Tcn(Tcn),
    Mlp(Mlp),
}

/// A trainable model together with its parameters.
#[derive(Clone, Debug)]
pub struct AnodeModel {
    pub config: ModelConfig,
    pub n_nodes: usize,
    pub encoder: Encoder,
    pub rhs: Mlp,
    pub store: ParameterStore,
    interleave: Vec<usize>,
    measured: Vec<usize>,
}

/// The TCN-encoded model.
pub type TcnAnode = AnodeModel;
/// The single-instant MLP-encoded baseline.
pub type MlpAnodeBaseline = AnodeModel;

impl AnodeModel {
    /// Allocates and initializes a model for a system of `n_nodes` nodes.
    pub fn new(config: ModelConfig, n_nodes: usize) -> Result<Self> {
        if n_nodes == 0 || config.encoder_width == 0 || (config.rhs_layers > 0 && config.rhs_width == 0) {
            return Err(Error::InvalidInput("model dimensions must be positive".into()));
        }
        if !(config.dt > 0.0) || config.history == 0 {
            return Err(Error::InvalidInput("model step and history must be positive".into()));
        }
        let n_x = STATES_PER_NODE * n_nodes;
        let n_y = OUTPUTS_PER_NODE * n_nodes;
        let n_u = n_nodes;
        let mut store = ParameterStore::new();
        let encoder = match config.kind {
            ModelKind::TcnAnode => {
                let blocks = match config.blocks {
                    Some(b) => b,
                    None => min_blocks(config.kernel, config.history)?,
                };
                Encoder::Tcn(Tcn::new(&mut store, "encoder", n_u + n_y, config.encoder_width, blocks, config.kernel, n_nodes)?)
            }
            ModelKind::MlpAnode => Encoder::Mlp(Mlp::new(&mut store, "encoder", &[n_y, config.encoder_width, n_nodes], config.activation)?),
        };
        let mut widths = vec![n_x + n_u];
        widths.extend(std::iter::repeat_n(config.rhs_width, config.rhs_layers));
        widths.push(n_x);
        let rhs = Mlp::new(&mut store, "rhs", &widths, config.activation)?;
        let last = *rhs.last_layer();
        store.set_init_scale(last.weight, config.rhs_output_scale);
        store.set_init_scale(last.bias, config.rhs_output_scale);
        store.init(config.seed);

        // concat(latents, y) -> [lat_0, y_0, y_1, lat_1, y_2, y_3, ...]
        let interleave = (0..n_nodes).flat_map(|i| [i, n_nodes + 2 * i, n_nodes + 2 * i + 1]).collect();
        let measured = crate::dynamics::measured_slots(n_nodes);
        Ok(Self { config, n_nodes, encoder, rhs, store, interleave, measured })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn n_x(&self) -> usize {
        STATES_PER_NODE * self.n_nodes
    }

    pub fn n_y(&self) -> usize {
        OUTPUTS_PER_NODE * self.n_nodes
    }

    pub fn n_u(&self) -> usize {
        self.n_nodes
    }

    pub fn n_params(&self) -> usize {
        self.store.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.store.values
    }

    /// Encoder receptive field in instants (1 for the single-instant baseline).
    pub fn receptive_field(&self) -> usize {
        match &self.encoder {
            Encoder::Tcn(t) => t.receptive_field(),
            Encoder::Mlp(_) => 1,
        }
    }

    /// Records `x(t_s)` on the tape from an input and output history of `H` rows.
    pub(crate) fn encode_on(&self, tape: &mut Tape<'_>, u_hist: ArrayView2<'_, f64>, y_hist: ArrayView2<'_, f64>) -> Result<Var> {
        let h = y_hist.nrows();
        if h == 0 || u_hist.nrows() != h {
            return Err(Error::InvalidInput(format!("history of {} inputs and {} outputs is not usable", u_hist.nrows(), h)));
        }
        if u_hist.ncols() != self.n_u() || y_hist.ncols() != self.n_y() {
            return Err(Error::DimensionMismatch { context: "encoder history channels", expected: self.n_u() + self.n_y(), actual: u_hist.ncols() + y_hist.ncols() });
        }
        let y0 = tape.input(y_hist.row(h - 1).to_vec());
        let latents = match &self.encoder {
            Encoder::Tcn(tcn) => {
                if h < self.config.history {
                    return Err(Error::InvalidInput(format!("history of {h} instants is shorter than the configured {}", self.config.history)));
                }
                let channels = self.n_u() + self.n_y();
                let mut seq = vec![0.0; channels * h];
                for j in 0..h {
                    for c in 0..self.n_u() {
                        seq[c * h + j] = u_hist[[j, c]];
                    }
                    for c in 0..self.n_y() {
                        seq[(self.n_u() + c) * h + j] = y_hist[[j, c]];
                    }
                }
                let x = tape.input(seq);
                tcn.forward_last(tape, x, h)
            }
            Encoder::Mlp(mlp) => mlp.forward(tape, y0),
        };
        let joined = tape.concat(&[latents, y0]);
        Ok(tape.gather(joined, &self.interleave))
    }

    fn rhs_on(&self, tape: &mut Tape<'_>, x: Var, u: Var) -> Var {
        let xu = tape.concat(&[x, u]);
        self.rhs.forward(tape, xu)
    }

    /// One classical RK4 step with `u` held constant.
    pub(crate) fn step_on(&self, tape: &mut Tape<'_>, x: Var, u: Var) -> Var {
        let dt = self.config.dt;
        let k1 = self.rhs_on(tape, x, u);
        let x2 = tape.lincomb(&[(x, 1.0), (k1, 0.5 * dt)]);
        let k2 = self.rhs_on(tape, x2, u);
        let x3 = tape.lincomb(&[(x, 1.0), (k2, 0.5 * dt)]);
        let k3 = self.rhs_on(tape, x3, u);
        let x4 = tape.lincomb(&[(x, 1.0), (k3, dt)]);
        let k4 = self.rhs_on(tape, x4, u);
        tape.lincomb(&[(x, 1.0), (k1, dt / 6.0), (k2, dt / 3.0), (k3, dt / 3.0), (k4, dt / 6.0)])
    }

    /// Rolls `x0` forward over every row of `u`, returning the per-step states.
    pub(crate) fn rollout_on(&self, tape: &mut Tape<'_>, x0: Var, u: ArrayView2<'_, f64>) -> Result<Vec<Var>> {
        if u.ncols() != self.n_u() {
            return Err(Error::DimensionMismatch { context: "rollout inputs", expected: self.n_u(), actual: u.ncols() });
        }
        let mut states = Vec::with_capacity(u.nrows());
        let mut x = x0;
        for (k, row) in u.rows().into_iter().enumerate() {
            let uk = tape.input(row.to_vec());
            x = self.step_on(tape, x, uk);
            if tape.value(x).iter().any(|v| !v.is_finite() || v.abs() > ROLLOUT_BOUND) {
                return Err(Error::RolloutFailed { step: k + 1 });
            }
            states.push(x);
        }
        Ok(states)
    }

    pub(crate) fn select_on(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        tape.gather(x, &self.measured)
    }

    /// Per-sample squared-error sum `sum_k |y_k - y_hat_k|^2` scaled by `weight`.
    pub(crate) fn sample_loss_on(&self, tape: &mut Tape<'_>, sample: &Sample<'_>, weight: f64) -> Result<Var> {
        let x0 = self.encode_on(tape, sample.history_inputs(), sample.history)?;
        let states = self.rollout_on(tape, x0, sample.rollout_inputs())?;
        let mut terms = Vec::with_capacity(states.len());
        for (k, x) in states.into_iter().enumerate() {
            let y = self.select_on(tape, x);
            let target = sample.target.row(k).to_vec();
            terms.push((tape.squared_error(y, &target), weight));
        }
        Ok(tape.lincomb(&terms))
    }
}

/// Initial state `x(t_s)` from an `H`-row history of inputs `u(t_{s-H}) .. u(t_{s-1})`
/// and outputs `y(t_{s-H+1}) .. y(t_s)`.
pub fn encode_initial_state(model: &AnodeModel, u_hist: ArrayView2<'_, f64>, y_hist: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let mut tape = Tape::inference(model.params());
    let x = model.encode_on(&mut tape, u_hist, y_hist)?;
    Ok(tape.value(x).to_vec())
}

/// Full states after each of the `u.nrows()` intervals.
pub fn rollout_states(model: &AnodeModel, x0: &[f64], u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x0.len() != model.n_x() {
        return Err(Error::DimensionMismatch { context: "rollout initial state", expected: model.n_x(), actual: x0.len() });
    }
    let mut tape = Tape::inference(model.params());
    let x = tape.input(x0.to_vec());
    let states = model.rollout_on(&mut tape, x, u)?;
    let mut out = Array2::zeros((states.len(), model.n_x()));
    for (mut row, s) in out.rows_mut().into_iter().zip(states) {
        row.iter_mut().zip(tape.value(s)).for_each(|(d, v)| *d = *v);
    }
    Ok(out)
}

/// Predicted outputs `y_hat(t_{s+1}) .. y_hat(t_{s+K})` for `K = u.nrows()`.
pub fn rollout(model: &AnodeModel, x0: &[f64], u: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let states = rollout_states(model, x0, u)?;
    let slots = crate::dynamics::measured_slots(model.n_nodes);
    Ok(Array2::from_shape_fn((states.nrows(), slots.len()), |(k, c)| states[[k, slots[c]]]))
}

/// Mean over samples and steps of the squared output error norm.
pub fn loss(model: &AnodeModel, samples: &[Sample<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for s in samples {
        let mut tape = Tape::inference(model.params());
        let l = model.sample_loss_on(&mut tape, s, 1.0 / s.horizon() as f64)?;
        total += tape.value(l)[0];
    }
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_sample, TargetSource, WindowSource, WindowSpec};
    use ndarray::s;

    fn tiny(kind: ModelKind) -> AnodeModel {
        let config = ModelConfig { kind, rhs_layers: 1, rhs_width: 6, encoder_width: 4, history: 8, seed: 3, ..ModelConfig::default() };
        AnodeModel::new(config, 2).unwrap()
    }

    fn source() -> WindowSource {
        let t = 40;
        let inputs = Array2::from_shape_fn((t, 2), |(k, c)| ((k + c) as f64 * 0.3).sin());
        let clean = Array2::from_shape_fn((t, 4), |(k, c)| ((k * (c + 1)) as f64 * 0.05).cos());
        WindowSource { inputs, noisy: clean.mapv(|v| v + 0.01), clean }
    }

    #[test]
    fn measured_slots_copied_exactly() {
        for kind in [ModelKind::TcnAnode, ModelKind::MlpAnode] {
            let m = tiny(kind);
            let src = source();
            let u = src.inputs.slice(s![0..8, ..]);
            let y = src.noisy.slice(s![1..9, ..]);
            let x = encode_initial_state(&m, u, y).unwrap();
            let last = y.row(7);
            for i in 0..2 {
                assert_eq!(x[3 * i + 1].to_bits(), last[2 * i].to_bits());
                assert_eq!(x[3 * i + 2].to_bits(), last[2 * i + 1].to_bits());
            }
        }
    }

    #[test]
    fn zeroed_encoder_gives_bias_latents() {
        let mut m = tiny(ModelKind::TcnAnode);
        let Encoder::Tcn(tcn) = &m.encoder else { unreachable!() };
        let bias = tcn.output.bias;
        let span = m.store.slices.iter().filter(|s| s.name.starts_with("encoder")).map(|s| s.offset + s.len).max().unwrap();
        m.store.values[..span].fill(0.0);
        m.store.values[bias] = 0.7;
        m.store.values[bias + 1] = -0.2;
        let src = source();
        let x = encode_initial_state(&m, src.inputs.slice(s![0..8, ..]), src.noisy.slice(s![1..9, ..])).unwrap();
        assert_eq!((x[0], x[3]), (0.7, -0.2));
    }

    #[test]
    fn short_history_rejected() {
        let m = tiny(ModelKind::TcnAnode);
        let src = source();
        assert!(encode_initial_state(&m, src.inputs.slice(s![0..4, ..]), src.noisy.slice(s![1..5, ..])).is_err());
    }

    #[test]
    fn zero_dynamics_hold_outputs() {
        let mut m = tiny(ModelKind::TcnAnode);
        let last = *m.rhs.last_layer();
        m.store.values[last.weight..last.weight + last.rows * last.cols].fill(0.0);
        m.store.values[last.bias..last.bias + last.rows].fill(0.0);
        let x0 = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let u = Array2::from_elem((5, 2), 0.3);
        let y = rollout(&m, &x0, u.view()).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![0.2, 0.3, 0.5, 0.6]);
        }
    }

    #[test]
    fn segmentation_identity() {
        let m = tiny(ModelKind::TcnAnode);
        let x0 = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6];
        let u = Array2::from_shape_fn((4, 2), |(k, c)| 0.1 * (k as f64) - 0.2 * c as f64);
        let full = rollout_states(&m, &x0, u.view()).unwrap();
        let first = rollout_states(&m, &x0, u.slice(s![0..2, ..])).unwrap();
        let mid = first.row(1).to_vec();
        let second = rollout_states(&m, &mid, u.slice(s![2..4, ..])).unwrap();
        for k in 0..2 {
            assert_eq!(full.row(k), first.row(k));
            assert_eq!(full.row(k + 2), second.row(k));
        }
    }

    #[test]
    fn loss_hand_values() {
        let m = tiny(ModelKind::MlpAnode);
        let src = source();
        let spec = WindowSpec::new(8, 3, 1).unwrap();
        let a = build_sample(&src, 10, &spec, TargetSource::Noisy).unwrap();
        let b = build_sample(&src, 14, &spec, TargetSource::Noisy).unwrap();
        let single = loss(&m, &[a]).unwrap();
        let doubled = loss(&m, &[a, a]).unwrap();
        assert!((single - doubled).abs() < 1e-15);
        let ab = loss(&m, &[a, b]).unwrap();
        let ba = loss(&m, &[b, a]).unwrap();
        assert!((ab - ba).abs() < 1e-14);
    }

    #[test]
    fn kind_names() {
        assert_eq!("tcn-anode".parse::<ModelKind>().unwrap(), ModelKind::TcnAnode);
        assert!("anode".parse::<ModelKind>().is_err());
        assert_eq!(serde_json::to_string(&ModelKind::MlpAnode).unwrap(), "\"mlp-anode\"");
    }
}

use log::{debug, info};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::AnodeModel;
use crate::data::{epoch_batches, Dataset, Sample};
use crate::nn::{AdamState, Tape};
use crate::{Error, Result};

/// Samples per gradient work unit. Chunk sums are added in a fixed order, so
/// the result does not depend on how many threads computed them.
const CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub threads: usize,
    /// Epoch interval at which the training hook is consulted.
    pub checkpoint_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { max_epochs: 1000, patience: 50, learning_rate: 1e-3, batch_size: 256, seed: 0, threads: 1, checkpoint_every: 10 }
    }
}

/// Per-epoch losses; epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    pub adam: AdamState,
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub best_params: Vec<f64>,
    pub history: Vec<EpochRecord>,
    /// Set when a hook ended training early.
    pub stopped_by_hook: bool,
}

impl TrainState {
    pub fn best_record(&self) -> &EpochRecord {
        self.history.iter().find(|r| r.epoch == self.best_epoch).expect("best epoch is recorded")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HookAction {
    Continue,
    Stop,
}

/// Callback invoked at checkpoint epochs with the current model.
pub type TrainHook<'a> = &'a mut dyn FnMut(usize, &AnodeModel) -> Result<HookAction>;

/// Rollout of one window, in the dataset's (normalized) units.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub start: usize,
    /// `K x n_y`; rows from the failure step on are NaN when the rollout failed.
    pub outputs: Array2<f64>,
    pub failed_at: Option<usize>,
    /// `sum_k |y_k - y_hat_k|^2 / K`, infinite on failure.
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub mse: f64,
}

fn predict(model: &AnodeModel, sample: &Sample<'_>) -> Result<Prediction> {
    let k = sample.horizon();
    let mut outputs = Array2::from_elem((k, model.n_y()), f64::NAN);
    let mut tape = Tape::inference(model.params());
    let x0 = model.encode_on(&mut tape, sample.history_inputs(), sample.history)?;
    let u = sample.rollout_inputs();
    let mut x = x0;
    let mut sum = 0.0;
    for step in 0..k {
        let uk = tape.input(u.row(step).to_vec());
        x = model.step_on(&mut tape, x, uk);
        if tape.value(x).iter().any(|v| !v.is_finite() || v.abs() > super::ROLLOUT_BOUND) {
            return Ok(Prediction { start: sample.start, outputs, failed_at: Some(step + 1), loss: f64::INFINITY });
        }
        let y = model.select_on(&mut tape, x);
        let target = sample.target.row(step).to_vec();
        let se = tape.squared_error(y, &target);
        sum += tape.value(se)[0];
        outputs.row_mut(step).iter_mut().zip(tape.value(y)).for_each(|(d, v)| *d = *v);
    }
    Ok(Prediction { start: sample.start, outputs, failed_at: None, loss: sum / k as f64 })
}

fn parallel_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if threads <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let per = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, slot) in out.chunks_mut(per).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, o) in slot.iter_mut().enumerate() {
                    *o = Some(f(t * per + i));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("every index computed")).collect()
}

/// Rolls out every window without recording gradients. Failed rollouts make
/// the mean infinite but still return the predictions that succeeded.
pub fn evaluate(model: &AnodeModel, dataset: &Dataset, threads: usize) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput(format!("{} dataset has no windows", dataset.role.name())));
    }
    let predictions = parallel_map(dataset.len(), threads, |n| predict(model, &dataset.sample(n))).into_iter().collect::<Result<Vec<_>>>()?;
    let mse = predictions.iter().map(|p| p.loss).sum::<f64>() / predictions.len() as f64;
    Ok(Evaluation { predictions, mse })
}

/// Batch loss `1/(N K) sum_n sum_k |y - y_hat|^2` and its gradient at `params`.
pub fn loss_and_gradient(model: &AnodeModel, params: &[f64], samples: &[Sample<'_>], threads: usize) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("gradient over an empty batch".into()));
    }
    if params.len() != model.n_params() {
        return Err(Error::DimensionMismatch { context: "parameter vector", expected: model.n_params(), actual: params.len() });
    }
    let n = samples.len() as f64;
    let chunks: Vec<&[Sample<'_>]> = samples.chunks(CHUNK).collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for wave in chunks.chunks(threads.max(1)) {
        let partial = parallel_map(wave.len(), threads, |c| -> Result<(f64, Vec<f64>)> {
            let mut g = vec![0.0; params.len()];
            let mut l = 0.0;
            for s in wave[c] {
                let mut tape = Tape::new(params);
                let root = model.sample_loss_on(&mut tape, s, 1.0 / (n * s.horizon() as f64))?;
                l += tape.value(root)[0];
                tape.backward(root, 1.0, &mut g)?;
            }
            Ok((l, g))
        });
        for p in partial {
            let (l, g) = p?;
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(d, s)| *d += s);
        }
    }
    Ok((loss, grad))
}

/// Trains with Adam on shuffled batches of `train`, tracks the validation loss
/// every epoch, stops after `patience` epochs without improvement and leaves
/// the best-validation parameters in `model`.
///
/// `hook` is called every `checkpoint_every` epochs with the current model and
/// may stop training early (used by pruning).
pub fn train(
    model: &mut AnodeModel,
    train: &Dataset,
    val: &Dataset,
    opts: &TrainOptions,
    mut hook: Option<TrainHook<'_>>,
) -> Result<TrainState> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidInput("training and validation datasets must be non-empty".into()));
    }
    if opts.batch_size == 0 || !(opts.learning_rate > 0.0) {
        return Err(Error::InvalidInput("batch size and learning rate must be positive".into()));
    }
    let threads = opts.threads.max(1);
    let initial_train = evaluate(model, train, threads)?.mse;
    let initial_val = evaluate(model, val, threads)?.mse;
    if !initial_train.is_finite() {
        return Err(Error::TrainingAborted { epoch: 0, reason: "initial training loss is not finite".into() });
    }
    let mut state = TrainState {
        adam: AdamState::new(model.n_params(), opts.learning_rate),
        epoch: 0,
        best_val: initial_val,
        best_epoch: 0,
        best_params: model.store.values.clone(),
        history: vec![EpochRecord { epoch: 0, train_loss: initial_train, val_loss: initial_val }],
        stopped_by_hook: false,
    };
    info!("{} epoch 0: train {initial_train:.6e} val {initial_val:.6e}", model.kind());

    for epoch in 1..=opts.max_epochs {
        for batch in epoch_batches(train.len(), opts.batch_size, opts.seed, epoch as u64) {
            let samples: Vec<Sample<'_>> = batch.iter().map(|&i| train.sample(i)).collect();
            let (l, g) = loss_and_gradient(model, &model.store.values, &samples, threads)
                .map_err(|e| Error::TrainingAborted { epoch, reason: e.to_string() })?;
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingAborted { epoch, reason: format!("non-finite batch loss {l}") });
            }
            state.adam.step(&mut model.store.values, &g)?;
        }
        let train_loss = evaluate(model, train, threads)?.mse;
        let val_loss = evaluate(model, val, threads)?.mse;
        state.epoch = epoch;
        state.history.push(EpochRecord { epoch, train_loss, val_loss });
        if epoch % 50 == 0 {
            info!("{} epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}", model.kind());
        } else {
            debug!("{} epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}", model.kind());
        }
        if val_loss < state.best_val {
            state.best_val = val_loss;
            state.best_epoch = epoch;
            state.best_params.copy_from_slice(&model.store.values);
        }
        if let Some(h) = hook.as_deref_mut() {
            if opts.checkpoint_every > 0 && epoch % opts.checkpoint_every == 0 && h(epoch, model)? == HookAction::Stop {
                state.stopped_by_hook = true;
                break;
            }
        }
        if epoch - state.best_epoch >= opts.patience {
            info!("{} early stop at epoch {epoch} (best {})", model.kind(), state.best_epoch);
            break;
        }
    }
    model.store.values.copy_from_slice(&state.best_params);
    info!("{} best epoch {} val {:.6e}", model.kind(), state.best_epoch, state.best_val);
    Ok(state)
}

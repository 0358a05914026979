//! Random search over the model hyperparameters with percentile pruning.
//!
//! Trials run one after another. At every checkpoint a running trial reports
//! its test-set metric; it is pruned when that metric is worse than the 25th
//! percentile of what the completed trials reported at the same checkpoint.

mod table;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anode::{evaluate, train, AnodeModel, HookAction, ModelConfig, TrainOptions};
use crate::data::DatasetBundle;
use crate::nn::Activation;
use crate::report::percentile;
use crate::{Error, Result};

pub use table::{write_study_csv, write_study_manifest, StudyManifest};

/// Percentile of completed-trial metrics a running trial must not exceed.
pub const PRUNE_PERCENTILE: f64 = 0.25;
/// Completed trials needed at a checkpoint before anything is pruned.
pub const MIN_COMPLETED_FOR_PRUNING: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub rhs_layers: Vec<usize>,
    pub rhs_width: Vec<usize>,
    pub encoder_width: Vec<usize>,
    /// Inclusive bounds of the log-uniform learning rate.
    pub learning_rate: (f64, f64),
    pub activations: Vec<Activation>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let widths = vec![32, 64, 128, 256, 512, 1024];
        Self {
            rhs_layers: vec![1, 2, 4],
            rhs_width: widths.clone(),
            encoder_width: widths,
            learning_rate: (1e-4, 1e-2),
            activations: vec![Activation::Softplus, Activation::Gelu, Activation::Silu],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.learning_rate;
        if self.rhs_layers.is_empty() || self.rhs_width.is_empty() || self.encoder_width.is_empty() || self.activations.is_empty() {
            return Err(Error::InvalidInput("every search dimension needs at least one choice".into()));
        }
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidInput(format!("invalid learning-rate range [{lo}, {hi}]")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub rhs_layers: usize,
    pub rhs_width: usize,
    pub encoder_width: usize,
    pub learning_rate: f64,
    pub activation: Activation,
}

impl TrialConfig {
    pub fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            rhs_layers: self.rhs_layers,
            rhs_width: self.rhs_width,
            encoder_width: self.encoder_width,
            activation: self.activation,
            ..base.clone()
        }
    }
}

fn choose<T: Copy>(rng: &mut impl Rng, items: &[T]) -> T {
    items[rng.random_range(0..items.len())]
}

/// Uniform categorical choices and a log-uniform learning rate.
pub fn sample_config(space: &SearchSpace, rng: &mut impl Rng) -> TrialConfig {
    let (lo, hi) = space.learning_rate;
    let exponent = rng.random_range(lo.log10()..=hi.log10());
    TrialConfig {
        rhs_layers: choose(rng, &space.rhs_layers),
        rhs_width: choose(rng, &space.rhs_width),
        encoder_width: choose(rng, &space.encoder_width),
        learning_rate: 10f64.powf(exponent).clamp(lo, hi),
        activation: choose(rng, &space.activations),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Pruned,
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub config: TrialConfig,
    pub seed: u64,
    /// `(epoch, metric)` at every checkpoint reached.
    pub checkpoints: Vec<(usize, f64)>,
    pub status: TrialStatus,
    pub pruned_at: Option<usize>,
    pub final_metric: Option<f64>,
    pub error: Option<String>,
}

impl Trial {
    pub fn new(id: usize, config: TrialConfig, seed: u64) -> Self {
        Self { id, config, seed, checkpoints: Vec::new(), status: TrialStatus::Running, pruned_at: None, final_metric: None, error: None }
    }

    pub fn metric_at(&self, epoch: usize) -> Option<f64> {
        self.checkpoints.iter().find(|(e, _)| *e == epoch).map(|(_, m)| *m)
    }
}

/// Prune when the trial's metric at `checkpoint` is worse (higher) than the
/// 25th percentile of completed trials' metrics there. Never prunes with fewer
/// than four such completed trials.
pub fn should_prune(trial: &Trial, completed: &[Trial], checkpoint: usize) -> bool {
    let Some(metric) = trial.metric_at(checkpoint) else {
        return false;
    };
    let reference: Vec<f64> = completed
        .iter()
        .filter(|t| t.status == TrialStatus::Complete)
        .filter_map(|t| t.metric_at(checkpoint))
        .collect();
    if reference.len() < MIN_COMPLETED_FOR_PRUNING {
        return false;
    }
    let threshold = percentile(&reference, PRUNE_PERCENTILE).expect("reference set is non-empty");
    !(metric <= threshold)
}

/// Collects the trials of a study and applies the pruning rule as trials report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub trials: Vec<Trial>,
}

impl Study {
    /// Runs one trial. `objective` receives the config and a reporter; it calls
    /// the reporter with `(checkpoint, metric)` and must stop when the reporter
    /// answers `true` (pruned). Its return value is the final metric.
    pub fn run_trial(
        &mut self,
        config: TrialConfig,
        seed: u64,
        objective: impl FnOnce(&TrialConfig, &mut dyn FnMut(usize, f64) -> bool) -> Result<f64>,
    ) -> &Trial {
        let mut trial = Trial::new(self.trials.len(), config, seed);
        let completed: Vec<Trial> = self.trials.iter().filter(|t| t.status == TrialStatus::Complete).cloned().collect();
        let outcome = {
            let mut report = |epoch: usize, metric: f64| {
                trial.checkpoints.push((epoch, metric));
                if should_prune(&trial, &completed, epoch) {
                    trial.pruned_at = Some(epoch);
                    return true;
                }
                false
            };
            objective(&config, &mut report)
        };
        match outcome {
            Ok(_) if trial.pruned_at.is_some() => trial.status = TrialStatus::Pruned,
            Ok(m) => {
                trial.status = TrialStatus::Complete;
                trial.final_metric = Some(m);
            }
            Err(e) => {
                warn!("trial {} failed: {e}", trial.id);
                trial.status = TrialStatus::Failed;
                trial.error = Some(e.to_string());
            }
        }
        self.trials.push(trial);
        self.trials.last().expect("just pushed")
    }

    /// Completed trial with the lowest final metric (earliest on ties).
    pub fn best(&self) -> Result<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.status == TrialStatus::Complete && t.final_metric.is_some_and(f64::is_finite))
            .min_by(|a, b| a.final_metric.unwrap().total_cmp(&b.final_metric.unwrap()))
            .ok_or_else(|| Error::NoCompletedTrial {
                pruned: self.trials.iter().filter(|t| t.status == TrialStatus::Pruned).count(),
                failed: self.trials.iter().filter(|t| t.status == TrialStatus::Failed).count(),
            })
    }

    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        let mut e: Vec<usize> = self.trials.iter().flat_map(|t| t.checkpoints.iter().map(|c| c.0)).collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub n_trials: usize,
    pub seed: u64,
    pub train: TrainOptions,
}

/// Trains one model per sampled config, with test-set metrics at every
/// checkpoint, and returns the full study. Use [`Study::best`] for the winner.
pub fn run_study(space: &SearchSpace, base: &ModelConfig, bundle: &DatasetBundle, opts: &StudyOptions) -> Result<Study> {
    space.validate()?;
    if opts.n_trials == 0 {
        return Err(Error::InvalidInput("a study needs at least one trial".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_nodes = bundle.train.n_u();
    let threads = opts.train.threads.max(1);
    let mut study = Study::default();
    for id in 0..opts.n_trials {
        let config = sample_config(space, &mut rng);
        let seed = rng.random::<u64>();
        info!("trial {id}: {config:?}");
        let trial = study.run_trial(config, seed, |cfg, report| {
            let model_config = ModelConfig { seed, ..cfg.apply(base) };
            let mut model = AnodeModel::new(model_config, n_nodes)?;
            let train_opts = TrainOptions { learning_rate: cfg.learning_rate, seed, ..opts.train.clone() };
            let mut hook = |epoch: usize, m: &AnodeModel| -> Result<HookAction> {
                let metric = evaluate(m, &bundle.test, threads)?.mse;
                Ok(if report(epoch, metric) { HookAction::Stop } else { HookAction::Continue })
            };
            train(&mut model, &bundle.train, &bundle.validation, &train_opts, Some(&mut hook))?;
            Ok(evaluate(&model, &bundle.test, threads)?.mse)
        });
        info!("trial {id}: {:?} final {:?}", trial.status, trial.final_metric);
    }
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn done(id: usize, metrics: &[(usize, f64)]) -> Trial {
        let mut t = Trial::new(id, sample_config(&SearchSpace::default(), &mut ChaCha8Rng::seed_from_u64(0)), 0);
        t.checkpoints = metrics.to_vec();
        t.status = TrialStatus::Complete;
        t.final_metric = metrics.last().map(|m| m.1);
        t
    }

    #[test]
    fn percentile_rule() {
        let completed: Vec<Trial> = (1..=4).map(|i| done(i, &[(10, i as f64)])).collect();
        let mut cand = Trial::new(0, completed[0].config, 0);
        cand.checkpoints.push((10, 1.0));
        assert!(!should_prune(&cand, &completed, 10));
        cand.checkpoints[0].1 = 2.5;
        assert!(should_prune(&cand, &completed, 10));
        cand.checkpoints[0].1 = 1.75;
        assert!(!should_prune(&cand, &completed, 10));
        assert!(!should_prune(&cand, &completed[..3], 10));
        cand.checkpoints[0].1 = f64::NAN;
        assert!(should_prune(&cand, &completed, 10));
    }

    #[test]
    fn sampled_configs_stay_in_space() {
        let space = SearchSpace::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<TrialConfig> = (0..10_000).map(|_| sample_config(&space, &mut rng)).collect();
        for d in &draws {
            assert!((1e-4..=1e-2).contains(&d.learning_rate));
            assert!(space.rhs_layers.contains(&d.rhs_layers));
        }
        for w in &space.rhs_width {
            assert!(draws.iter().any(|d| d.rhs_width == *w) && draws.iter().any(|d| d.encoder_width == *w));
        }
        for a in &space.activations {
            assert!(draws.iter().any(|d| d.activation == *a));
        }
        let lrs: Vec<f64> = draws.iter().map(|d| d.learning_rate).collect();
        let median = percentile(&lrs, 0.5).unwrap();
        assert!((median / 1e-3 - 1.0).abs() < 0.1, "{median}");
    }

    #[test]
    fn best_and_empty_study() {
        let mut s = Study::default();
        assert!(matches!(s.best(), Err(Error::NoCompletedTrial { pruned: 0, failed: 0 })));
        let cfg = done(0, &[]).config;
        s.run_trial(cfg, 1, |_, _| Ok(0.5));
        s.run_trial(cfg, 2, |_, _| Err(Error::InvalidInput("boom".into())));
        s.run_trial(cfg, 3, |_, _| Ok(0.2));
        assert_eq!(s.best().unwrap().id, 2);
        assert_eq!(s.trials[1].status, TrialStatus::Failed);
    }
}

//! Fixed-step RK4 integration, random setpoint schedules and closed-loop
//! trajectory generation.

mod io;
mod noise;

pub use io::{input_names, output_names, read_trajectory, write_trajectory, TrajectoryManifest};
pub use noise::{add_noise, empirical_snr_db, noise_std_ratio};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{output_map, RhsScratch, SystemModel};
use crate::{Error, Result};

/// Default bound on `|x|_inf` beyond which a simulation is declared divergent.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

/// Reusable stage buffers for classical RK4 on a state of fixed length.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(n: usize) -> Self {
        Self { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }

    /// Advances `x` in place by one step of `dt`. `f(x, dx)` writes the derivative.
    pub fn step(&mut self, mut f: impl FnMut(&[f64], &mut [f64]), x: &mut [f64], dt: f64) {
        let n = x.len();
        f(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One RK4 step of `x' = f(x, u)` with `u` held constant across the stages.
pub fn rk4_step(mut f: impl FnMut(&[f64], &[f64]) -> Vec<f64>, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    let mut next = x.to_vec();
    Rk4::new(x.len()).step(|s, d| d.copy_from_slice(&f(s, u)), &mut next, dt);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("RK4 step"));
    }
    Ok(next)
}

fn steps_in(duration: f64, dt: f64, what: &str) -> Result<usize> {
    if !(dt > 0.0 && duration >= 0.0) {
        return Err(Error::InvalidInput(format!("{what}: need dt > 0 and duration >= 0")));
    }
    let steps = (duration / dt).round();
    if (steps * dt - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::InvalidInput(format!("{what}: {duration} s is not a multiple of dt = {dt} s")));
    }
    Ok(steps as usize)
}

/// Piecewise-constant active power setpoints, redrawn at every multiple of `period`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub nominal: Vec<f64>,
    pub amplitude: f64,
    pub period: f64,
    pub seed: u64,
}

impl StepSchedule {
    /// Number of step instants `k * period` that fall inside `[0, duration)`.
    pub fn step_count(&self, duration: f64) -> usize {
        let ratio = duration / self.period;
        let whole = ratio.round();
        if (ratio - whole).abs() < 1e-9 {
            whole as usize
        } else {
            ratio.ceil() as usize
        }
    }

    /// Setpoint levels, one row per step instant.
    pub fn levels(&self, count: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..count)
            .map(|_| {
                self.nominal
                    .iter()
                    .map(|&p| if self.amplitude > 0.0 { p + rng.random_range(-self.amplitude..=self.amplitude) } else { p })
                    .collect()
            })
            .collect()
    }

    /// Input held at each of `instants` sampling instants spaced `dt` apart.
    pub fn inputs(&self, instants: usize, dt: f64) -> Result<Array2<f64>> {
        let per_step = steps_in(self.period, dt, "step period")?;
        if per_step == 0 {
            return Err(Error::InvalidInput("step period must be at least one sampling interval".into()));
        }
        let levels = self.levels(instants.div_ceil(per_step).max(1));
        let mut u = Array2::zeros((instants, self.nominal.len()));
        for (k, mut row) in u.rows_mut().into_iter().enumerate() {
            for (dst, &src) in row.iter_mut().zip(&levels[k / per_step]) {
                *dst = src;
            }
        }
        Ok(u)
    }
}

/// Random step schedule drawing each level uniformly in `nominal +- amplitude`.
pub fn generate_step_schedule(nominal: &[f64], amplitude: f64, period: f64, seed: u64) -> Result<StepSchedule> {
    if !(period > 0.0 && amplitude >= 0.0) {
        return Err(Error::InvalidInput("step period must be positive and amplitude non-negative".into()));
    }
    Ok(StepSchedule { nominal: nominal.to_vec(), amplitude, period, seed })
}

/// Sampled closed-loop trajectory. Row `k` of every matrix belongs to `t_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    /// Full state including angles; absent for trajectories read back from disk.
    pub states: Option<Array2<f64>>,
    pub inputs: Array2<f64>,
    pub outputs: Array2<f64>,
    pub noisy_outputs: Array2<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Replaces the noisy outputs with a fresh noise realization of the clean ones.
    pub fn with_noise(mut self, snr_db: f64, seed: u64) -> Self {
        self.noisy_outputs = add_noise(&self.outputs, snr_db, seed);
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SimOptions {
    pub divergence_bound: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { divergence_bound: DEFAULT_DIVERGENCE_BOUND }
    }
}

/// Integrates the ground-truth model from `x0`, one RK4 step per sampling interval,
/// with the input held at its value at the start of each interval.
pub fn simulate(model: &SystemModel, x0: &[f64], schedule: &StepSchedule, duration: f64, dt: f64, opts: SimOptions) -> Result<Trajectory> {
    let steps = steps_in(duration, dt, "duration")?;
    if x0.len() != model.n_x() {
        return Err(Error::DimensionMismatch { context: "initial state", expected: model.n_x(), actual: x0.len() });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    if schedule.nominal.len() != model.n_u() {
        return Err(Error::DimensionMismatch { context: "schedule", expected: model.n_u(), actual: schedule.nominal.len() });
    }
    let inputs = schedule.inputs(steps + 1, dt)?;
    let mut states = Array2::zeros((steps + 1, model.n_x()));
    let mut outputs = Array2::zeros((steps + 1, model.n_y()));
    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    let mut scratch = RhsScratch::new(model.n_nodes());
    for k in 0..=steps {
        states.row_mut(k).iter_mut().zip(&x).for_each(|(d, s)| *d = *s);
        outputs.row_mut(k).iter_mut().zip(output_map(&x)).for_each(|(d, s)| *d = s);
        if k == steps {
            break;
        }
        let u = inputs.row(k).to_vec();
        rk.step(|s, d| model.rhs_into(s, &u, d, &mut scratch), &mut x, dt);
        let norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(norm <= opts.divergence_bound) {
            return Err(Error::Divergence { time: (k + 1) as f64 * dt, norm });
        }
    }
    let times = (0..=steps).map(|k| k as f64 * dt).collect();
    let noisy_outputs = outputs.clone();
    Ok(Trajectory { dt, times, states: Some(states), inputs, outputs, noisy_outputs })
}

/// Flat start followed by `warmup` seconds under nominal inputs.
pub fn warm_start(model: &SystemModel, warmup: f64, dt: f64) -> Result<Vec<f64>> {
    let u = model.nominal_input();
    let mut x = model.flat_start(&u);
    let steps = steps_in(warmup, dt, "warm-up")?;
    let mut rk = Rk4::new(x.len());
    let mut scratch = RhsScratch::new(model.n_nodes());
    for k in 0..steps {
        rk.step(|s, d| model.rhs_into(s, &u, d, &mut scratch), &mut x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: (k + 1) as f64 * dt, norm: f64::INFINITY });
        }
    }
    Ok(x)
}

/// Integrates under constant `u` until `|f(x, u)|_inf <= tol` or the RK4 map
/// stops moving the state, returning the equilibrium. Fails if neither happens
/// within `max_time` seconds.
pub fn settle(model: &SystemModel, u: &[f64], dt: f64, tol: f64, max_time: f64) -> Result<Vec<f64>> {
    let mut x = model.flat_start(u);
    let mut rk = Rk4::new(x.len());
    let mut scratch = RhsScratch::new(model.n_nodes());
    let mut dx = vec![0.0; x.len()];
    let mut prev = vec![0.0; x.len()];
    let max_steps = (max_time / dt).ceil() as usize;
    for k in 0..=max_steps {
        model.rhs_into(&x, u, &mut dx, &mut scratch);
        let residual = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual <= tol {
            return Ok(x);
        }
        if !residual.is_finite() {
            return Err(Error::Divergence { time: k as f64 * dt, norm: f64::INFINITY });
        }
        prev.copy_from_slice(&x);
        rk.step(|s, d| model.rhs_into(s, u, d, &mut scratch), &mut x, dt);
        // A bitwise fixed point of the integrator is as settled as rounding allows.
        if x == prev {
            return Ok(x);
        }
    }
    Err(Error::InvalidInput(format!("no equilibrium within {max_time} s (tolerance {tol:e})")))
}

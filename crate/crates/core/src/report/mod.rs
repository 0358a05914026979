//! Prediction metrics in physical units: bracketed RMSE of voltage and
//! frequency responses, box-plot statistics and CSV exports.

mod export;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{gfi_frequency, SystemModel, Unit};
use crate::{Error, Result};

pub use export::{write_box_csv, write_metrics_csv, write_overlay_csv, MetricsRow, OverlaySeries};

/// Horizon interval `(start, end]` in seconds after the window start.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub name: &'static str,
    pub start: f64,
    pub end: f64,
}

pub const BRACKETS: [Bracket; 3] = [
    Bracket { name: "short", start: 0.0, end: 1.5 },
    Bracket { name: "medium", start: 1.5, end: 3.0 },
    Bracket { name: "long", start: 3.0, end: 5.0 },
];

impl Bracket {
    /// 1-based prediction steps `first..=last` covered at sampling interval `dt`.
    pub fn steps(&self, dt: f64) -> (usize, usize) {
        ((self.start / dt).round() as usize + 1, (self.end / dt).round() as usize)
    }
}

/// Frequency and voltage per node, one row per instant.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSignals {
    pub omega: Array2<f64>,
    pub voltage: Array2<f64>,
}

/// Pooled RMSE per bracket; `None` where the horizon does not reach the bracket end.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseBrackets {
    pub voltage: [Option<f64>; 3],
    pub omega: [Option<f64>; 3],
}

/// Node frequencies from measured outputs: generator frequencies pass through,
/// inverter frequencies follow the droop law with the setpoint active at that instant.
pub fn reconstruct_frequencies(model: &SystemModel, outputs: ArrayView2<'_, f64>, setpoints: ArrayView2<'_, f64>) -> Result<NodeSignals> {
    let n = model.n_nodes();
    if outputs.ncols() != model.n_y() {
        return Err(Error::DimensionMismatch { context: "output channels", expected: model.n_y(), actual: outputs.ncols() });
    }
    let needs_setpoint = model.units().iter().any(Unit::is_gfi);
    if needs_setpoint && (setpoints.nrows() != outputs.nrows() || setpoints.ncols() != n) {
        return Err(Error::InvalidInput(format!(
            "inverter frequency reconstruction needs a {}x{n} setpoint trace, got {}x{}",
            outputs.nrows(),
            setpoints.nrows(),
            setpoints.ncols()
        )));
    }
    let rows = outputs.nrows();
    let mut omega = Array2::zeros((rows, n));
    let mut voltage = Array2::zeros((rows, n));
    for k in 0..rows {
        for (i, unit) in model.units().iter().enumerate() {
            let second = outputs[[k, 2 * i]];
            omega[[k, i]] = match unit {
                Unit::Sg(_) => second,
                Unit::Gfi(p) => gfi_frequency(p, second, setpoints[[k, i]]),
            };
            voltage[[k, i]] = outputs[[k, 2 * i + 1]];
        }
    }
    Ok(NodeSignals { omega, voltage })
}

fn pooled_rmse(pred: &Array2<f64>, truth: &Array2<f64>, first: usize, last: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for k in first - 1..last {
        for (a, b) in pred.row(k).iter().zip(truth.row(k)) {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    let r = (sum / count as f64).sqrt();
    // A failed rollout leaves NaN predictions; rank it as infinitely wrong.
    if r.is_nan() {
        f64::INFINITY
    } else {
        r
    }
}

/// RMSE per bracket pooled over all nodes of each quantity.
pub fn rmse_brackets(pred: &NodeSignals, truth: &NodeSignals, dt: f64) -> Result<RmseBrackets> {
    if pred.omega.dim() != truth.omega.dim() || pred.voltage.dim() != truth.voltage.dim() {
        return Err(Error::InvalidInput("prediction and truth are not aligned".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput("sampling interval must be positive".into()));
    }
    let horizon = truth.voltage.nrows();
    let mut out = RmseBrackets { voltage: [None; 3], omega: [None; 3] };
    for (b, bracket) in BRACKETS.iter().enumerate() {
        let (first, last) = bracket.steps(dt);
        if last > horizon || first > last {
            continue;
        }
        out.voltage[b] = Some(pooled_rmse(&pred.voltage, &truth.voltage, first, last));
        out.omega[b] = Some(pooled_rmse(&pred.omega, &truth.omega, first, last));
    }
    Ok(out)
}

/// Percentile `q` in `[0, 1]` of sorted data with linear interpolation between
/// order statistics (position `q (n - 1)`).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("percentile of an empty set".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&v, q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quartiles by linear interpolation; whiskers at the furthest data within
/// 1.5 IQR of the box.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::InvalidInput("box statistics of an empty set".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, median, q3) = (percentile_sorted(&v, 0.25), percentile_sorted(&v, 0.5), percentile_sorted(&v, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |x: &&f64| **x >= lo_fence && **x <= hi_fence;
    let whisker_low = v.iter().find(inside).copied().unwrap_or(q1);
    let whisker_high = v.iter().rev().find(inside).copied().unwrap_or(q3);
    let outliers = v.iter().filter(|x| !inside(x)).copied().collect();
    Ok(BoxStats { count: v.len(), median, q1, q3, whisker_low, whisker_high, outliers })
}

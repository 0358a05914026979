use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoxStats, RmseBrackets, BRACKETS};
use crate::Result;

/// One step response in the per-sample metrics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub sample: usize,
    pub start: usize,
    pub time: f64,
    pub rmse: RmseBrackets,
    pub failed_at: Option<usize>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string(), "sample".into(), "start_index".into(), "start_time".into()];
    for q in ["v", "omega"] {
        header.extend(BRACKETS.iter().map(|b| format!("rmse_{q}_{}", b.name)));
    }
    header.push("failed_at".into());
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.model.clone(), r.sample.to_string(), r.start.to_string(), r.time.to_string()];
        rec.extend(r.rmse.voltage.iter().map(|v| fmt_opt(*v)));
        rec.extend(r.rmse.omega.iter().map(|v| fmt_opt(*v)));
        rec.push(r.failed_at.map(|k| k.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of `(model, quantity, bracket, stats)`.
pub fn write_box_csv(path: &Path, rows: &[(String, String, String, BoxStats)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "quantity", "bracket", "count", "median", "q1", "q3", "whisker_low", "whisker_high", "outliers"])?;
    for (model, quantity, bracket, b) in rows {
        w.write_record([
            model.clone(),
            quantity.clone(),
            bracket.clone(),
            b.count.to_string(),
            b.median.to_string(),
            b.q1.to_string(),
            b.q3.to_string(),
            b.whisker_low.to_string(),
            b.whisker_high.to_string(),
            b.outliers.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One channel of an overlay plot: truth, measurement and prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlaySeries {
    pub name: String,
    pub truth: Vec<f64>,
    pub measured: Vec<f64>,
    pub predicted: Vec<f64>,
}

pub fn write_overlay_csv(path: &Path, times: &[f64], series: &[OverlaySeries]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["time".to_string()];
    for s in series {
        header.extend([format!("{}_true", s.name), format!("{}_measured", s.name), format!("{}_predicted", s.name)]);
    }
    w.write_record(&header)?;
    for (k, t) in times.iter().enumerate() {
        let mut rec = vec![t.to_string()];
        for s in series {
            rec.extend([s.truth[k].to_string(), s.measured[k].to_string(), s.predicted[k].to_string()]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

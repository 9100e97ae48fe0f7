//! Trial scoring: prediction error, safety index, efficiency index, and
//! aggregation into per-model tables.

use std::collections::BTreeMap;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::{run_trial, TrialConfig, TrialLog};
use crate::types::{Position, HORIZON};

/// Per-frame horizon-averaged error of the prediction issued at that frame,
/// or `None` where there is no prediction or no realized step to compare.
pub fn prediction_error_series(log: &TrialLog) -> Vec<Option<f64>> {
    let realized: Vec<Option<Position>> = log.records.iter().map(|r| r.human).collect();
    log.records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let pred = r.prediction.as_ref()?;
            let mut sum = 0.0;
            let mut count = 0usize;
            for m in 1..=HORIZON {
                if let Some(Some(actual)) = realized.get(k + m) {
                    sum += (pred.step(m) - actual).norm();
                    count += 1;
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect()
}

/// Mean distance between each predicted step and the smoothed position
/// realized at that step. `None` for trials without predictions.
pub fn prediction_error(log: &TrialLog) -> Option<f64> {
    let realized: Vec<Option<Position>> = log.records.iter().map(|r| r.human).collect();
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, r) in log.records.iter().enumerate() {
        let Some(pred) = &r.prediction else { continue };
        for m in 1..=HORIZON {
            if let Some(Some(actual)) = realized.get(k + m) {
                sum += (pred.step(m) - actual).norm();
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Running mean; exact when every value is equal. NaN for an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut m = 0.0;
    for (k, v) in values.iter().enumerate() {
        m += (v - m) / (k + 1) as f64;
    }
    m
}

/// Mean of the per-frame minimum human-robot distances.
pub fn safety_from_distances(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::Validation("safety index of an empty trial".into()));
    }
    if let Some(d) = distances.iter().find(|d| d.is_nan() || **d < 0.0) {
        return Err(Error::Validation(format!("invalid distance {d}")));
    }
    Ok(mean(distances))
}

pub fn safety_index(log: &TrialLog) -> Result<f64> {
    let distances: Option<Vec<f64>> = log.records.iter().map(|r| r.min_dist).collect();
    let distances = distances.ok_or_else(|| Error::Validation("safety index needs a human in every frame".into()))?;
    safety_from_distances(&distances)
}

/// Mean end-effector-to-target distance over the trial.
pub fn mean_target_distance(log: &TrialLog) -> Result<f64> {
    if log.records.is_empty() {
        return Err(Error::Validation("empty trial log".into()));
    }
    let d: Vec<f64> = log.records.iter().map(|r| (r.robot - r.target).norm()).collect();
    Ok(mean(&d))
}

/// Mean robot-target distance of the same trial with the human removed.
pub fn ground_truth_drt(config: &TrialConfig) -> Result<f64> {
    mean_target_distance(&run_trial(&config.without_human(), None)?)
}

pub fn efficiency_from_distance(mean_distance: f64, d_rt: f64) -> Result<f64> {
    if !(d_rt > 0.0 && d_rt.is_finite()) {
        return Err(Error::Config(format!(
            "ground-truth distance must be positive, got {d_rt}"
        )));
    }
    if mean_distance.is_nan() || mean_distance <= 0.0 {
        return Err(Error::Validation(format!(
            "mean target distance must be positive, got {mean_distance}"
        )));
    }
    Ok(d_rt / mean_distance)
}

pub fn efficiency_index(log: &TrialLog, d_rt: f64) -> Result<f64> {
    efficiency_from_distance(mean_target_distance(log)?, d_rt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub model: String,
    pub pattern: String,
    pub trial: usize,
    pub prediction_error: Option<f64>,
    pub safety: f64,
    pub efficiency: f64,
}

pub fn score_trial(model: &str, pattern: &str, trial: usize, log: &TrialLog, d_rt: f64) -> Result<TrialScore> {
    Ok(TrialScore {
        model: model.to_string(),
        pattern: pattern.to_string(),
        trial,
        prediction_error: prediction_error(log),
        safety: safety_index(log)?,
        efficiency: efficiency_index(log, d_rt)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample variance (n - 1 denominator); 0 for a single value.
    pub variance: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let m = mean(values);
        let variance = if n > 1 {
            values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some(Summary {
            mean: m,
            variance,
            count: n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub prediction_error: Option<Summary>,
    pub safety: Summary,
    pub efficiency: Summary,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub trials: Vec<TrialScore>,
    /// Keyed by model name.
    pub per_model: BTreeMap<String, CellSummary>,
    /// Keyed by (model, pattern).
    pub per_cell: BTreeMap<(String, String), CellSummary>,
}

fn summarize(scores: &[&TrialScore]) -> Option<CellSummary> {
    let errors: Vec<f64> = scores.iter().filter_map(|s| s.prediction_error).collect();
    let safety: Vec<f64> = scores.iter().map(|s| s.safety).collect();
    let efficiency: Vec<f64> = scores.iter().map(|s| s.efficiency).collect();
    Some(CellSummary {
        prediction_error: Summary::of(&errors),
        safety: Summary::of(&safety)?,
        efficiency: Summary::of(&efficiency)?,
    })
}

/// Mean and sample variance per model and per (model, pattern).
pub fn aggregate(trials: Vec<TrialScore>) -> ScoreReport {
    let mut by_model: BTreeMap<String, Vec<&TrialScore>> = BTreeMap::new();
    let mut by_cell: BTreeMap<(String, String), Vec<&TrialScore>> = BTreeMap::new();
    for t in &trials {
        by_model.entry(t.model.clone()).or_default().push(t);
        by_cell.entry((t.model.clone(), t.pattern.clone())).or_default().push(t);
    }
    let mut per_model = BTreeMap::new();
    for (k, v) in by_model {
        match summarize(&v) {
            Some(s) => {
                per_model.insert(k, s);
            }
            None => warn!("model {k} has no trials; omitted"),
        }
    }
    let mut per_cell = BTreeMap::new();
    for (k, v) in by_cell {
        if let Some(s) = summarize(&v) {
            per_cell.insert(k, s);
        }
    }
    ScoreReport {
        trials,
        per_model,
        per_cell,
    }
}

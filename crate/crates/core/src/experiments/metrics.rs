use serde::{Deserialize, Serialize};

use super::Metric;
use crate::error::{Result, ZslError};

/// Both accuracy variants for one method on one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    #[serde(rename = "macro")]
    pub macro_avg: f64,
}

impl Accuracy {
    pub fn of(predicted: &[usize], truth: &[usize]) -> Result<Self> {
        Ok(Accuracy {
            overall: accuracy(predicted, truth, Metric::Overall)?,
            macro_avg: accuracy(predicted, truth, Metric::Macro)?,
        })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Overall => self.overall,
            Metric::Macro => self.macro_avg,
        }
    }
}

/// Overall: fraction correct. Macro: mean over the classes present in
/// `truth` of the per-class fraction correct.
pub fn accuracy(predicted: &[usize], truth: &[usize], metric: Metric) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(ZslError::InvalidArgument("accuracy of an empty set".into()));
    }
    match metric {
        Metric::Overall => {
            let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
            Ok(hits as f64 / truth.len() as f64)
        }
        Metric::Macro => {
            let classes = truth.iter().copied().max().unwrap_or(0) + 1;
            let mut hits = vec![0usize; classes];
            let mut totals = vec![0usize; classes];
            for (&p, &t) in predicted.iter().zip(truth) {
                totals[t] += 1;
                if p == t {
                    hits[t] += 1;
                }
            }
            let (sum, present) = hits
                .iter()
                .zip(&totals)
                .filter(|(_, &n)| n > 0)
                .fold((0.0, 0usize), |(s, c), (&h, &n)| (s + h as f64 / n as f64, c + 1));
            Ok(sum / present as f64)
        }
    }
}

/// Box-plot statistics. Percentiles interpolate linearly between order
/// statistics at rank `p·(n−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pct = |p: f64| {
        let rank = p * (sorted.len() - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        let frac = rank - lo as f64;
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    };
    Some(Summary {
        count: values.len(),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        median: pct(0.5),
        q25: pct(0.25),
        q75: pct(0.75),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
    })
}

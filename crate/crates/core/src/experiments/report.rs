use serde::{Deserialize, Serialize};

use super::metrics::{summarize, Accuracy, Summary};
use super::{ExperimentConfig, Method, Metric};
use crate::dataset::ClassId;
use crate::error::Result;
use crate::signatures::CovarianceMode;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialFlags {
    pub em_not_converged: bool,
    pub baseline_not_converged: bool,
    pub collapsed_components: usize,
    /// Unseen classes whose sparse code was all zero.
    pub zero_code_classes: Vec<String>,
    pub lasso_not_converged: usize,
}

/// Per-instance predictions as dataset class ids, kept on request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialPredictions {
    pub upper_bound: Option<Vec<ClassId>>,
    pub inductive: Option<Vec<ClassId>>,
    pub transductive: Option<Vec<ClassId>>,
    pub baseline: Option<Vec<ClassId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub unseen: Vec<String>,
    pub unseen_ids: Vec<ClassId>,
    pub covariance_mode: CovarianceMode,
    pub upper_bound: Option<Accuracy>,
    pub inductive: Option<Accuracy>,
    pub transductive: Option<Accuracy>,
    pub baseline: Option<Accuracy>,
    pub em_iterations: Option<usize>,
    pub baseline_em_iterations: Option<usize>,
    pub flags: TrialFlags,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub predictions: Option<TrialPredictions>,
}

impl TrialResult {
    pub fn accuracy(&self, method: Method) -> Option<Accuracy> {
        match method {
            Method::UpperBound => self.upper_bound,
            Method::Inductive => self.inductive,
            Method::Transductive => self.transductive,
            Method::Baseline => self.baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub overall: Option<Summary>,
    #[serde(rename = "macro")]
    pub macro_avg: Option<Summary>,
}

impl MethodAggregate {
    pub fn get(&self, metric: Metric) -> Option<&Summary> {
        match metric {
            Metric::Overall => self.overall.as_ref(),
            Metric::Macro => self.macro_avg.as_ref(),
        }
    }
}

/// Largest failed-trial fraction for which a report is still valid.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub generator: String,
    pub config: ExperimentConfig,
    pub methods: Vec<Method>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub aggregates: Vec<MethodAggregate>,
    pub valid: bool,
}

impl ExperimentReport {
    pub(crate) fn assemble(
        config: ExperimentConfig,
        methods: Vec<Method>,
        trials: Vec<TrialResult>,
        failures: Vec<TrialFailure>,
    ) -> Self {
        let aggregates = aggregate(&methods, &trials);
        let attempted = trials.len() + failures.len();
        let valid = attempted > 0 && (failures.len() as f64) <= MAX_FAILURE_RATE * attempted as f64;
        ExperimentReport {
            version: crate::VERSION.to_string(),
            generator: crate::rng::GENERATOR.to_string(),
            config,
            methods,
            trials,
            failures,
            aggregates,
            valid,
        }
    }

    pub fn aggregate_for(&self, method: Method) -> Option<&MethodAggregate> {
        self.aggregates.iter().find(|a| a.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// `trial,method,overall,macro,em_iterations` rows.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial,unseen,method,overall,macro,em_iterations\n");
        for t in &self.trials {
            for &m in &self.methods {
                if let Some(acc) = t.accuracy(m) {
                    let iters = match m {
                        Method::Transductive => t.em_iterations,
                        Method::Baseline => t.baseline_em_iterations,
                        _ => None,
                    };
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        t.trial,
                        t.unseen.join(";"),
                        m,
                        acc.overall,
                        acc.macro_avg,
                        iters.map(|i| i.to_string()).unwrap_or_default()
                    ));
                }
            }
        }
        out
    }

    /// Box-plot statistics of the headline metric, one row per method.
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("method,mean,median,q25,q75,min,max\n");
        for agg in &self.aggregates {
            if let Some(s) = agg.get(self.config.metric) {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    agg.method, s.mean, s.median, s.q25, s.q75, s.min, s.max
                ));
            }
        }
        out
    }

    pub fn summary_lines(&self) -> Vec<String> {
        let metric = self.config.metric;
        let mut lines: Vec<String> = self
            .aggregates
            .iter()
            .map(|agg| match agg.get(metric) {
                Some(s) => format!(
                    "{:<13} {metric} mean {:.4}  q25 {:.4}  median {:.4}  q75 {:.4}  ({} trials)",
                    agg.method, s.mean, s.q25, s.median, s.q75, s.count
                ),
                None => format!("{:<13} no successful trials", agg.method),
            })
            .collect();
        if !self.failures.is_empty() {
            lines.push(format!(
                "{} of {} trials failed{}",
                self.failures.len(),
                self.failures.len() + self.trials.len(),
                if self.valid { "" } else { "; report marked invalid" }
            ));
        }
        lines
    }
}

pub(crate) fn aggregate(methods: &[Method], trials: &[TrialResult]) -> Vec<MethodAggregate> {
    methods
        .iter()
        .map(|&method| {
            let accs: Vec<Accuracy> = trials.iter().filter_map(|t| t.accuracy(method)).collect();
            let overall: Vec<f64> = accs.iter().map(|a| a.overall).collect();
            let macro_avg: Vec<f64> = accs.iter().map(|a| a.macro_avg).collect();
            MethodAggregate {
                method,
                overall: summarize(&overall),
                macro_avg: summarize(&macro_avg),
            }
        })
        .collect()
}

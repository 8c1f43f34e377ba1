use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::gmm_em::EmOptions;
use crate::signatures::CovarianceMode;
use crate::sparse_synth::LassoParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Fraction of instances classified correctly.
    Overall,
    /// Unweighted mean of per-class accuracies.
    Macro,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Overall => "overall",
            Metric::Macro => "macro",
        })
    }
}

impl FromStr for Metric {
    type Err = ZslError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overall" => Ok(Metric::Overall),
            "macro" => Ok(Metric::Macro),
            other => Err(ZslError::InvalidArgument(format!(
                "unknown metric `{other}` (expected overall or macro)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Per-class Gaussians fitted with the true labels.
    UpperBound,
    /// Synthesized signatures used directly.
    Inductive,
    /// Synthesized signatures refined by EM on the unseen instances.
    Transductive,
    /// EM from randomly chosen unseen instances.
    Baseline,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::UpperBound,
        Method::Inductive,
        Method::Transductive,
        Method::Baseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::UpperBound => "upper-bound",
            Method::Inductive => "inductive",
            Method::Transductive => "transductive",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ZslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "upper-bound" | "upper_bound" => Ok(Method::UpperBound),
            "inductive" | "syn-sig" => Ok(Method::Inductive),
            "transductive" | "gmm-em" => Ok(Method::Transductive),
            "baseline" | "random-init" => Ok(Method::Baseline),
            other => Err(ZslError::InvalidArgument(format!(
                "unknown method `{other}` (expected upper-bound, inductive, transductive or baseline)"
            ))),
        }
    }
}

/// Everything that determines the outcome of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// PCA output dimension; 0 disables PCA.
    pub pca_dim: usize,
    /// `None` picks a mode per trial from the class sizes.
    pub covariance_mode: Option<CovarianceMode>,
    pub lasso_lambda: f64,
    pub lasso_tol: f64,
    pub lasso_max_iters: usize,
    /// `None` uses 1e-4 × mean feature variance.
    pub ridge: Option<f64>,
    pub em_tol: f64,
    pub em_max_iters: usize,
    /// Coefficient of the `N_k ≥ λ·d²` sample-support rule.
    pub support_lambda: f64,
    pub metric: Metric,
    pub seed: u64,
    /// Trial worker threads; `None` uses all cores. Never changes results.
    #[serde(skip)]
    pub workers: Option<usize>,
    /// Keep per-instance predictions in each trial result.
    #[serde(skip)]
    pub keep_predictions: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lasso = LassoParams::default();
        let em = EmOptions::default();
        ExperimentConfig {
            pca_dim: 0,
            covariance_mode: None,
            lasso_lambda: lasso.lambda,
            lasso_tol: lasso.tol,
            lasso_max_iters: lasso.max_iters,
            ridge: None,
            em_tol: em.tol,
            em_max_iters: em.max_iters,
            support_lambda: 1.0,
            metric: Metric::Overall,
            seed: 0,
            workers: None,
            keep_predictions: false,
        }
    }
}

impl ExperimentConfig {
    /// Settings used for the 50-class animal benchmark: 80-dim PCA, diagonal.
    pub fn awa_like() -> Self {
        ExperimentConfig {
            pca_dim: 80,
            covariance_mode: Some(CovarianceMode::Diagonal),
            ..Default::default()
        }
    }

    /// Settings used for the 200-class bird benchmark: 400-dim PCA, unit.
    pub fn cub_like() -> Self {
        ExperimentConfig {
            pca_dim: 400,
            covariance_mode: Some(CovarianceMode::Unit),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ZslError::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.lasso_lambda >= 0.0 && self.lasso_lambda.is_finite()) {
            return Err(ZslError::InvalidArgument(format!(
                "lasso_lambda must be >= 0, got {}",
                self.lasso_lambda
            )));
        }
        positive("lasso_tol", self.lasso_tol)?;
        positive("em_tol", self.em_tol)?;
        positive("support_lambda", self.support_lambda)?;
        if let Some(r) = self.ridge {
            positive("ridge", r)?;
        }
        if self.lasso_max_iters == 0 || self.em_max_iters == 0 {
            return Err(ZslError::InvalidArgument("iteration caps must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(ZslError::InvalidArgument("workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lasso_params(&self) -> LassoParams {
        LassoParams {
            lambda: self.lasso_lambda,
            tol: self.lasso_tol,
            max_iters: self.lasso_max_iters,
        }
    }

    pub fn em_options(&self, ridge: f64) -> EmOptions {
        EmOptions {
            tol: self.em_tol,
            max_iters: self.em_max_iters,
            ridge,
        }
    }
}

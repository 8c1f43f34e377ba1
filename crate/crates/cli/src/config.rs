//! `key = value` configuration files and `key=value` synthetic-data
//! parameters.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use zsl_core::experiments::{EmbeddingFidelity, SyntheticSpec};

pub const KEYS: &[&str] = &[
    "features",
    "labels",
    "embeddings",
    "splits",
    "synthetic",
    "unseen",
    "trials",
    "methods",
    "mode",
    "pca_dim",
    "lasso_lambda",
    "lasso_tol",
    "lasso_max_iters",
    "ridge",
    "em_tol",
    "em_max_iters",
    "support_lambda",
    "metric",
    "seed",
    "workers",
    "output",
    "format",
    "scope",
];

/// Parsed config file. Every key is optional; unknown keys are rejected.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, (usize, String)>,
    path: String,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{line_no}: expected `key = value`, got `{line}`"))?;
            let key = key.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                bail!("{origin}:{line_no}: unknown key `{key}`");
            }
            if values.insert(key.clone(), (line_no, value.trim().to_string())).is_some() {
                bail!("{origin}:{line_no}: key `{key}` given twice");
            }
        }
        Ok(FileConfig {
            values,
            path: origin.to_string(),
        })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("{}:{line}: bad value for `{key}`: {e}", self.path)),
        }
    }

    /// Comma- or whitespace-separated list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key).map(split_list).unwrap_or_default()
    }
}

pub fn split_list(text: &str) -> Vec<String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Generator settings plus the split shape used with them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    pub spec: SyntheticSpec,
    pub unseen: Option<usize>,
    pub trials: Option<usize>,
}

pub fn parse_synthetic(pairs: &[String], seed: u64) -> Result<SynthParams> {
    let mut spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::default()
    };
    let mut noise = 0.0;
    let mut unseen = None;
    let mut trials = None;
    for pair in pairs {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("synthetic parameter `{pair}` is not key=value"))?;
        let value = value.trim();
        let num = |v: &str| -> Result<usize> {
            v.parse().map_err(|e| anyhow!("synthetic parameter `{key}`: {e}"))
        };
        let real = |v: &str| -> Result<f64> {
            v.parse().map_err(|e| anyhow!("synthetic parameter `{key}`: {e}"))
        };
        match key.trim().replace('-', "_").as_str() {
            "classes" => spec.classes = num(value)?,
            "per_class" => spec.per_class = num(value)?,
            "dim" | "feature_dim" => spec.feature_dim = num(value)?,
            "embedding_dim" => spec.embedding_dim = num(value)?,
            "separation" => spec.separation = real(value)?,
            "noise" => noise = real(value)?,
            "unseen" => unseen = Some(num(value)?),
            "trials" => trials = Some(num(value)?),
            other => bail!(
                "unknown synthetic parameter `{other}` (expected classes, per_class, dim, \
                 embedding_dim, separation, noise, unseen, trials)"
            ),
        }
    }
    spec.fidelity = if noise > 0.0 {
        EmbeddingFidelity::Noisy(noise)
    } else {
        EmbeddingFidelity::ExactLinear
    };
    Ok(SynthParams { spec, unseen, trials })
}

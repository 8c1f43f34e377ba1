use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ClassId, ZslDataset};
use crate::error::{Result, ZslError};
use crate::rng::{SplitMix64, Stream};

/// Unseen-class sets, one per trial. Each trial's seen set is the complement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub seed: u64,
    pub unseen_count: usize,
    pub trials: Vec<Vec<ClassId>>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    unseen_count: usize,
    trials: Vec<Vec<String>>,
}

/// Draws `trial_count` unseen sets of `unseen_count` distinct classes each.
/// Trial `t` uses its own substream, so trials are independent of each other
/// and of how many are requested. Ids within a trial are sorted ascending.
pub fn generate_splits(
    class_count: usize,
    unseen_count: usize,
    trial_count: usize,
    seed: u64,
) -> Result<SplitSpec> {
    if unseen_count == 0 || unseen_count >= class_count {
        return Err(ZslError::InvalidSplit(format!(
            "unseen count must be in 1..{class_count}, got {unseen_count}"
        )));
    }
    if trial_count == 0 {
        return Err(ZslError::InvalidSplit("trial count must be at least 1".into()));
    }
    let trials = (0..trial_count)
        .map(|t| {
            let mut rng = SplitMix64::stream(seed, Stream::Splits, t as u64);
            let mut ids = rng.sample_distinct(class_count, unseen_count);
            ids.sort_unstable();
            ids
        })
        .collect();
    Ok(SplitSpec {
        seed,
        unseen_count,
        trials,
    })
}

impl SplitSpec {
    /// Single-trial spec, e.g. a fixed default split.
    pub fn single(unseen: Vec<ClassId>) -> Self {
        SplitSpec {
            seed: 0,
            unseen_count: unseen.len(),
            trials: vec![unseen],
        }
    }

    pub fn validate(&self, class_count: usize) -> Result<()> {
        if self.trials.is_empty() {
            return Err(ZslError::InvalidSplit("no trials".into()));
        }
        for (t, trial) in self.trials.iter().enumerate() {
            check_unseen(trial, class_count).map_err(|e| match e {
                ZslError::InvalidSplit(m) => ZslError::InvalidSplit(format!("trial {t}: {m}")),
                other => other,
            })?;
        }
        Ok(())
    }

    /// JSON document using class names.
    pub fn to_json(&self, class_names: &[String]) -> Result<String> {
        let file = SplitFile {
            seed: self.seed,
            unseen_count: self.unseen_count,
            trials: self
                .trials
                .iter()
                .map(|t| t.iter().map(|&c| class_names[c].clone()).collect())
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str, class_names: &[String]) -> Result<Self> {
        let file: SplitFile = serde_json::from_str(text)?;
        let trials = file
            .trials
            .iter()
            .enumerate()
            .map(|(t, names)| {
                names
                    .iter()
                    .map(|n| {
                        class_names.iter().position(|c| c == n).ok_or_else(|| {
                            ZslError::InvalidSplit(format!("trial {t}: unknown class `{n}`"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = SplitSpec {
            seed: file.seed,
            unseen_count: file.unseen_count,
            trials,
        };
        spec.validate(class_names.len())?;
        Ok(spec)
    }
}

fn check_unseen(unseen: &[ClassId], class_count: usize) -> Result<()> {
    if unseen.is_empty() {
        return Err(ZslError::InvalidSplit("no unseen classes".into()));
    }
    let mut sorted = unseen.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != unseen.len() {
        return Err(ZslError::InvalidSplit("duplicate unseen class".into()));
    }
    if let Some(bad) = sorted.iter().find(|&&c| c >= class_count) {
        return Err(ZslError::InvalidSplit(format!("unknown class id {bad}")));
    }
    if sorted.len() >= class_count {
        return Err(ZslError::InvalidSplit("no seen classes left".into()));
    }
    Ok(())
}

/// One side of a split.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Dataset class ids, ascending.
    pub classes: Vec<ClassId>,
    /// Rows of the dataset belonging to `classes`, in dataset order.
    pub features: DMatrix<f64>,
    /// Per-row index into `classes`.
    pub labels: Vec<usize>,
    /// Original dataset row of each partition row.
    pub instances: Vec<usize>,
    /// Embedding rows of `classes`, same order.
    pub embeddings: DMatrix<f64>,
}

impl Partition {
    fn build(dataset: &ZslDataset, classes: Vec<ClassId>) -> Self {
        let mut local = vec![usize::MAX; dataset.n_classes()];
        for (i, &c) in classes.iter().enumerate() {
            local[c] = i;
        }
        let instances: Vec<usize> = dataset
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| local[l] != usize::MAX)
            .map(|(i, _)| i)
            .collect();
        let labels = instances.iter().map(|&i| local[dataset.labels()[i]]).collect();
        let features = dataset.features().select_rows(instances.iter());
        let embeddings = dataset.embeddings().select_rows(classes.iter());
        Partition {
            classes,
            features,
            labels,
            instances,
            embeddings,
        }
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    /// Dataset class id of each row.
    pub fn class_labels(&self) -> Vec<ClassId> {
        self.labels.iter().map(|&l| self.classes[l]).collect()
    }
}

/// Splits the dataset into (seen, unseen) partitions.
pub fn apply_split(dataset: &ZslDataset, unseen: &[ClassId]) -> Result<(Partition, Partition)> {
    check_unseen(unseen, dataset.n_classes())?;
    let mut unseen_sorted = unseen.to_vec();
    unseen_sorted.sort_unstable();
    let seen: Vec<ClassId> = (0..dataset.n_classes())
        .filter(|c| unseen_sorted.binary_search(c).is_err())
        .collect();
    Ok((
        Partition::build(dataset, seen),
        Partition::build(dataset, unseen_sorted),
    ))
}

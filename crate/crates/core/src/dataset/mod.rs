//! Instances, labels and label embeddings, plus seen/unseen splits.
//!
//! Class identifiers are strings in files and dense integer ids (row index in
//! the embedding matrix) everywhere else.

mod io;
mod split;

pub use io::{
    load_dataset, load_dataset_fused, read_embeddings, read_features, write_dataset_csv,
    write_features_binary, FEATURES_MAGIC,
};
pub use split::{apply_split, generate_splits, Partition, SplitSpec};

use nalgebra::DMatrix;

use crate::error::{Result, ZslError};

pub type ClassId = usize;

/// Feature matrix (one row per instance), labels and per-class embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ZslDataset {
    features: DMatrix<f64>,
    labels: Vec<ClassId>,
    embeddings: DMatrix<f64>,
    class_names: Vec<String>,
}

impl ZslDataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<ClassId>,
        embeddings: DMatrix<f64>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        let k = embeddings.nrows();
        if labels.len() != n {
            return Err(ZslError::DimensionMismatch(format!(
                "{n} feature rows but {} labels",
                labels.len()
            )));
        }
        if class_names.len() != k {
            return Err(ZslError::DimensionMismatch(format!(
                "{k} embedding rows but {} class names",
                class_names.len()
            )));
        }
        if k < 2 {
            return Err(ZslError::InvalidArgument(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        if n < k {
            return Err(ZslError::InvalidArgument(format!(
                "need at least one instance per class on average: {n} instances, {k} classes"
            )));
        }
        if features.ncols() == 0 || embeddings.ncols() == 0 {
            return Err(ZslError::InvalidArgument(
                "feature and embedding dimensions must be at least 1".into(),
            ));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(ZslError::InvalidArgument(format!(
                "label {bad} does not name one of the {k} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::NonFinite("feature matrix".into()));
        }
        if embeddings.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::NonFinite("embedding matrix".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = class_names.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(ZslError::InvalidArgument(format!("duplicate class `{dup}`")));
        }
        Ok(ZslDataset {
            features,
            labels,
            embeddings,
            class_names,
        })
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn embeddings(&self) -> &DMatrix<f64> {
        &self.embeddings
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_instances(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_names.iter().position(|c| c == name)
    }

    /// Instance count per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Same dataset with the features replaced (e.g. by a PCA projection).
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Self> {
        ZslDataset::new(
            features,
            self.labels.clone(),
            self.embeddings.clone(),
            self.class_names.clone(),
        )
    }
}

/// Scales every row to unit L2 norm. All-zero rows are left as they are.
pub fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

/// Column-wise concatenation of embedding blocks, each block row-normalized
/// first so that no block dominates by scale.
pub fn fuse_embeddings(blocks: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    let first = blocks
        .first()
        .ok_or_else(|| ZslError::InvalidArgument("no embedding blocks".into()))?;
    let rows = first.nrows();
    if let Some(b) = blocks.iter().find(|b| b.nrows() != rows) {
        return Err(ZslError::DimensionMismatch(format!(
            "embedding blocks have {rows} and {} rows",
            b.nrows()
        )));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for block in blocks {
        let mut b = block.clone();
        normalize_rows(&mut b);
        out.view_mut((0, offset), (rows, b.ncols())).copy_from(&b);
        offset += b.ncols();
    }
    Ok(out)
}

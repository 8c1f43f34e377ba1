//! Synthetic zero-shot benchmarks where the Gaussian class model and the
//! linear embedding relation hold by construction.
//!
//! Every class gets a latent direction `z_k` on the unit sphere of `R^L`,
//! extended by a constant coordinate shared by all classes: `y_k = (z_k, 1)`.
//! Class means are `r·P y_k` and embeddings are `Q y_k`, with `P` (d×(L+1))
//! and `Q` (D'×(L+1)) having orthonormal columns, so a linear combination of
//! embeddings maps to the same combination of means. The shared coordinate
//! plays the role of the common component of real attribute vectors: exact
//! reconstructions of one embedding from others have coefficients summing to
//! one. It needs `min(d, D') >= 3`; below that `L = min(d, D')` and there is
//! no shared coordinate.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_rows, ZslDataset};
use crate::error::{Result, ZslError};
use crate::rng::{SplitMix64, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "level")]
pub enum EmbeddingFidelity {
    ExactLinear,
    /// Adds noise whose norm is this fraction of the embedding norm.
    Noisy(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub embedding_dim: usize,
    /// Minimum distance between class means, in units of the (unit) class
    /// standard deviation.
    pub separation: f64,
    pub fidelity: EmbeddingFidelity,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 12,
            per_class: 100,
            feature_dim: 10,
            embedding_dim: 10,
            separation: 6.0,
            fidelity: EmbeddingFidelity::ExactLinear,
            seed: 0,
        }
    }
}

/// Generating parameters, kept for oracle checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub spec: SyntheticSpec,
    /// One row per class.
    pub means: Vec<Vec<f64>>,
    pub scale: f64,
    pub min_mean_distance: f64,
}

/// `c00`, `c01`, ... padded to the width of the largest index.
pub fn class_name(k: usize, classes: usize) -> String {
    let width = classes.saturating_sub(1).to_string().len().max(2);
    format!("c{k:0width$}")
}

fn gaussian_matrix(rng: &mut SplitMix64, rows: usize, cols: usize) -> DMatrix<f64> {
    // column-major fill; the order is part of the output contract
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn orthonormal_columns(rng: &mut SplitMix64, rows: usize, cols: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, rows, cols);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn unit_vector(rng: &mut SplitMix64, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(ZslDataset, SyntheticTruth)> {
    let SyntheticSpec {
        classes,
        per_class,
        feature_dim: d,
        embedding_dim: e,
        separation,
        fidelity,
        seed,
    } = *spec;
    if classes < 2 || per_class == 0 || d == 0 || e == 0 {
        return Err(ZslError::InvalidArgument(format!(
            "synthetic data needs classes >= 2 and positive per_class/dims \
             (got classes={classes}, per_class={per_class}, d={d}, embedding_dim={e})"
        )));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(ZslError::InvalidArgument(format!(
            "separation must be finite and >= 0, got {separation}"
        )));
    }
    if let EmbeddingFidelity::Noisy(level) = fidelity {
        if !(level >= 0.0 && level.is_finite()) {
            return Err(ZslError::InvalidArgument(format!(
                "noise level must be finite and >= 0, got {level}"
            )));
        }
    }
    let shared = d.min(e) >= 3;
    let latent = if shared { d.min(e) - 1 } else { d.min(e) };
    let cols = latent + usize::from(shared);
    let mut structure = SplitMix64::stream(seed, Stream::Synthetic, 0);
    let p = orthonormal_columns(&mut structure, d, cols);
    let q = orthonormal_columns(&mut structure, e, cols);
    let z: Vec<DVector<f64>> = (0..classes).map(|_| unit_vector(&mut structure, latent)).collect();
    let y: Vec<DVector<f64>> = if shared {
        z.iter().map(|zk| zk.push(1.0)).collect()
    } else {
        z.clone()
    };

    let mut min_dist = f64::INFINITY;
    for i in 0..classes {
        for j in i + 1..classes {
            min_dist = min_dist.min((&z[i] - &z[j]).norm());
        }
    }
    let scale = if separation == 0.0 {
        0.0
    } else if min_dist < 1e-9 {
        return Err(ZslError::Infeasible(format!(
            "cannot place {classes} classes {separation} apart with latent dimension {latent}"
        )));
    } else {
        separation / min_dist
    };
    let means: Vec<DVector<f64>> = y.iter().map(|yk| &p * yk * scale).collect();

    let mut embeddings = DMatrix::zeros(classes, e);
    let mut noise_rng = SplitMix64::stream(seed, Stream::Synthetic, 2);
    for (k, yk) in y.iter().enumerate() {
        let mut row = &q * yk;
        if let EmbeddingFidelity::Noisy(level) = fidelity {
            let signal = row.norm();
            row += unit_vector(&mut noise_rng, e) * (level * signal);
        }
        embeddings.set_row(k, &row.transpose());
    }
    normalize_rows(&mut embeddings);

    let n = classes * per_class;
    let mut sample_rng = SplitMix64::stream(seed, Stream::Synthetic, 1);
    let mut features = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for (k, mean) in means.iter().enumerate() {
        for i in 0..per_class {
            let row = k * per_class + i;
            for c in 0..d {
                features[(row, c)] = mean[c] + sample_rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(k);
        }
    }
    let names = (0..classes).map(|k| class_name(k, classes)).collect();
    let dataset = ZslDataset::new(features, labels, embeddings, names)?;
    let truth = SyntheticTruth {
        spec: *spec,
        means: means.iter().map(|m| m.iter().copied().collect()).collect(),
        scale,
        min_mean_distance: scale * min_dist,
    };
    Ok((dataset, truth))
}

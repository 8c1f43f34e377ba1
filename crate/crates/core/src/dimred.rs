//! PCA used to shrink the feature dimension until per-class sample counts can
//! support covariance estimation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use crate::error::{Result, ZslError};

/// Top-`d` principal directions of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    /// d×D, orthonormal rows.
    basis: DMatrix<f64>,
    /// Length d, descending, nonnegative.
    explained_variance: DVector<f64>,
}

impl PcaModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn explained_variance(&self) -> &DVector<f64> {
        &self.explained_variance
    }

    pub fn input_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Projects each row of `x` (M×D) to `basis · (x − mean)`.
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(ZslError::DimensionMismatch(format!(
                "PCA fitted on {} columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut centered = x.clone();
        for mut row in centered.row_iter_mut() {
            row -= self.mean.transpose();
        }
        Ok(centered * self.basis.transpose())
    }

    /// Maps reduced rows (M×d) back into the input space.
    pub fn inverse_transform(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.output_dim() {
            return Err(ZslError::DimensionMismatch(format!(
                "PCA output has {} columns, got {}",
                self.output_dim(),
                z.ncols()
            )));
        }
        let mut x = z * &self.basis;
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        Ok(x)
    }
}

/// Fits PCA with sample covariance (1/(N−1)). Uses the D×D covariance when
/// D ≤ N and the N×N Gram matrix otherwise. If `dim` exceeds the numerical
/// rank, the trailing directions complete the basis with ~0 variance.
pub fn fit_pca(x: &DMatrix<f64>, dim: usize) -> Result<PcaModel> {
    let (n, d_in) = x.shape();
    if n < 2 {
        return Err(ZslError::InvalidArgument(format!(
            "PCA needs at least 2 rows, got {n}"
        )));
    }
    if dim == 0 || dim > n.min(d_in) {
        return Err(ZslError::InvalidArgument(format!(
            "PCA dimension must be in 1..={}, got {dim}",
            n.min(d_in)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ZslError::NonFinite("PCA input".into()));
    }
    let mean = x.row_mean().transpose();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n - 1) as f64;

    let (mut directions, mut variances) = if d_in <= n {
        let cov = (centered.transpose() * &centered) / denom;
        let eig = SymmetricEigen::new(cov);
        let order = descending(&eig.eigenvalues);
        let dirs: Vec<DVector<f64>> = order[..dim]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect();
        let vars = order[..dim].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        (dirs, vars)
    } else {
        gram_directions(&centered, dim, denom)
    };

    for dir in directions.iter_mut() {
        fix_sign(dir);
    }
    // keep ordering stable if clamping produced ties out of order
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| variances[b].total_cmp(&variances[a]));
    directions = idx.iter().map(|&i| directions[i].clone()).collect();
    variances = idx.iter().map(|&i| variances[i]).collect();

    let mut basis = DMatrix::zeros(dim, d_in);
    for (r, dir) in directions.iter().enumerate() {
        basis.set_row(r, &dir.transpose());
    }
    Ok(PcaModel {
        mean,
        basis,
        explained_variance: DVector::from_vec(variances),
    })
}

fn descending(values: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Principal directions from the eigenvectors of `Xc Xcᵀ / (N−1)`.
fn gram_directions(centered: &DMatrix<f64>, dim: usize, denom: f64) -> (Vec<DVector<f64>>, Vec<f64>) {
    let d_in = centered.ncols();
    let gram = (centered * centered.transpose()) / denom;
    let eig = SymmetricEigen::new(gram);
    let order = descending(&eig.eigenvalues);
    let top = eig.eigenvalues[order[0]].max(0.0);
    let cutoff = top * 1e-12 * (centered.nrows().max(d_in) as f64);

    let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let mut vars = Vec::with_capacity(dim);
    for &i in order.iter().take(dim) {
        let lambda = eig.eigenvalues[i];
        if lambda <= cutoff {
            break;
        }
        let v = centered.transpose() * eig.eigenvectors.column(i);
        if let Some(v) = orthonormalize(v, &dirs) {
            dirs.push(v);
            vars.push(lambda);
        }
    }
    // complete with canonical axes orthogonal to the data span
    let mut axis = 0;
    while dirs.len() < dim && axis < d_in {
        let mut e = DVector::zeros(d_in);
        e[axis] = 1.0;
        axis += 1;
        if let Some(v) = orthonormalize(e, &dirs) {
            let proj = centered * &v;
            vars.push(proj.norm_squared() / denom);
            dirs.push(v);
        }
    }
    (dirs, vars)
}

/// Two passes of Gram-Schmidt against `basis`; `None` if `v` is (numerically)
/// inside their span.
fn orthonormalize(mut v: DVector<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    let original = v.norm();
    if original == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
    }
    let norm = v.norm();
    if norm <= original * 1e-10 {
        return None;
    }
    Some(v / norm)
}

/// Largest-magnitude entry positive.
fn fix_sign(v: &mut DVector<f64>) {
    let pivot = v.iamax();
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
}

/// Classes whose instance count is below `lambda · d²`, the rule of thumb for
/// reliable full-covariance estimation.
pub fn undersupported_classes(counts: &[usize], dim: usize, lambda: f64) -> Vec<usize> {
    let need = lambda * (dim * dim) as f64;
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| (c as f64) < need)
        .map(|(i, _)| i)
        .collect()
}

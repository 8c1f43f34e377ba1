//! Gaussian class signatures: estimation from labeled instances and
//! log-density evaluation.
//!
//! Covariances use the 1/N convention so a one-point class is well defined
//! once the ridge is added. Densities are only ever evaluated in log space.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Full,
    Diagonal,
    Unit,
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::Full => "full",
            CovarianceMode::Diagonal => "diagonal",
            CovarianceMode::Unit => "unit",
        })
    }
}

impl FromStr for CovarianceMode {
    type Err = ZslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(CovarianceMode::Full),
            "diagonal" | "diag" => Ok(CovarianceMode::Diagonal),
            "unit" | "identity" => Ok(CovarianceMode::Unit),
            other => Err(ZslError::InvalidArgument(format!(
                "unknown covariance mode `{other}` (expected full, diagonal or unit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// Dense matrix with its lower Cholesky factor.
    Full {
        matrix: DMatrix<f64>,
        factor: DMatrix<f64>,
    },
    Diagonal(DVector<f64>),
    Unit,
}

/// Mean and covariance of one class, with the cached log normalizer
/// `−½(d·ln 2π + ln|Σ|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSignature {
    mean: DVector<f64>,
    covariance: Covariance,
    log_norm: f64,
}

impl GaussianSignature {
    pub fn unit(mean: DVector<f64>) -> Self {
        let d = mean.len() as f64;
        GaussianSignature {
            mean,
            covariance: Covariance::Unit,
            log_norm: -0.5 * d * LN_2PI,
        }
    }

    pub fn diagonal(mean: DVector<f64>, variances: DVector<f64>) -> Result<Self> {
        if variances.len() != mean.len() {
            return Err(ZslError::DimensionMismatch(format!(
                "mean has {} entries, diagonal {}",
                mean.len(),
                variances.len()
            )));
        }
        if variances.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(ZslError::NotPositiveDefinite { class: None });
        }
        let log_det: f64 = variances.iter().map(|v| v.ln()).sum();
        let d = mean.len() as f64;
        Ok(GaussianSignature {
            mean,
            covariance: Covariance::Diagonal(variances),
            log_norm: -0.5 * (d * LN_2PI + log_det),
        })
    }

    /// Full covariance. The matrix must be symmetric (within 1e-10 relative)
    /// and positive definite; it is stored exactly symmetrized.
    pub fn full(mean: DVector<f64>, matrix: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if matrix.shape() != (d, d) {
            return Err(ZslError::DimensionMismatch(format!(
                "mean has {d} entries, covariance is {:?}",
                matrix.shape()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ZslError::NonFinite("covariance".into()));
        }
        let asym = (&matrix - matrix.transpose()).amax();
        if asym > 1e-10 * matrix.amax().max(1.0) {
            return Err(ZslError::InvalidArgument(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let matrix = (&matrix + matrix.transpose()) * 0.5;
        let chol = Cholesky::new(matrix.clone()).ok_or(ZslError::NotPositiveDefinite { class: None })?;
        let factor = chol.unpack();
        let log_det = 2.0 * factor.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(ZslError::NotPositiveDefinite { class: None });
        }
        Ok(GaussianSignature {
            mean,
            covariance: Covariance::Full { matrix, factor },
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.covariance
    }

    pub fn mode(&self) -> CovarianceMode {
        match self.covariance {
            Covariance::Full { .. } => CovarianceMode::Full,
            Covariance::Diagonal(_) => CovarianceMode::Diagonal,
            Covariance::Unit => CovarianceMode::Unit,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    /// Dense covariance matrix.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        match &self.covariance {
            Covariance::Full { matrix, .. } => matrix.clone(),
            Covariance::Diagonal(v) => DMatrix::from_diagonal(v),
            Covariance::Unit => DMatrix::identity(self.dim(), self.dim()),
        }
    }

    /// Same covariance, different mean.
    pub fn with_mean(&self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.dim() {
            return Err(ZslError::DimensionMismatch(format!(
                "expected mean of length {}, got {}",
                self.dim(),
                mean.len()
            )));
        }
        Ok(GaussianSignature {
            mean,
            covariance: self.covariance.clone(),
            log_norm: self.log_norm,
        })
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(ZslError::DimensionMismatch(format!(
                "signature has dimension {}, point has {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(self.log_density_unchecked(x))
    }

    /// Half the squared Mahalanobis distance subtracted from the normalizer.
    /// Full mode solves `L y = x − μ` by forward substitution.
    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let mean = self.mean.as_slice();
        let quad = match &self.covariance {
            Covariance::Unit => x.iter().zip(mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>(),
            Covariance::Diagonal(var) => x
                .iter()
                .zip(mean)
                .zip(var.iter())
                .map(|((a, m), v)| (a - m) * (a - m) / v)
                .sum::<f64>(),
            Covariance::Full { factor, .. } => {
                let d = x.len();
                let mut y = vec![0.0; d];
                let mut quad = 0.0;
                for i in 0..d {
                    let mut s = x[i] - mean[i];
                    for j in 0..i {
                        s -= factor[(i, j)] * y[j];
                    }
                    y[i] = s / factor[(i, i)];
                    quad += y[i] * y[i];
                }
                quad
            }
        };
        self.log_norm - 0.5 * quad
    }
}

/// Default ridge: 1e-4 times the mean per-feature variance (floored at 1e-12).
pub fn default_ridge(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows().max(1) as f64;
    let mean = x.row_mean();
    let mut total = 0.0;
    for j in 0..x.ncols() {
        total += x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
    }
    (1e-4 * total / x.ncols().max(1) as f64).max(1e-12)
}

/// Weighted Gaussian fit over the columns of `points` (d×N):
/// `μ = Σ wₙxₙ / W`, `Σ = Σ wₙ(xₙ−μ)(xₙ−μ)ᵀ / W + εI`. Diagonal keeps the
/// diagonal of Σ, Unit ignores it.
pub(crate) fn weighted_signature(
    points: &DMatrix<f64>,
    weights: &[f64],
    mode: CovarianceMode,
    ridge: f64,
) -> Result<GaussianSignature> {
    let (d, n) = points.shape();
    debug_assert_eq!(weights.len(), n);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(ZslError::InvalidArgument("zero total weight".into()));
    }
    let mut mean = DVector::zeros(d);
    for (j, &w) in weights.iter().enumerate() {
        if w != 0.0 {
            mean.axpy(w, &points.column(j), 1.0);
        }
    }
    mean /= total;
    match mode {
        CovarianceMode::Unit => Ok(GaussianSignature::unit(mean)),
        CovarianceMode::Diagonal => {
            let mut var = DVector::from_element(d, 0.0);
            for (j, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    for i in 0..d {
                        let c = points[(i, j)] - mean[i];
                        var[i] += w * c * c;
                    }
                }
            }
            var /= total;
            var.add_scalar_mut(ridge);
            GaussianSignature::diagonal(mean, var)
        }
        CovarianceMode::Full => {
            let active: Vec<usize> = (0..n).filter(|&j| weights[j] != 0.0).collect();
            let mut scaled = DMatrix::zeros(d, active.len());
            for (c, &j) in active.iter().enumerate() {
                let s = weights[j].sqrt();
                for i in 0..d {
                    scaled[(i, c)] = s * (points[(i, j)] - mean[i]);
                }
            }
            let mut cov = &scaled * scaled.transpose();
            cov /= total;
            for i in 0..d {
                cov[(i, i)] += ridge;
            }
            GaussianSignature::full(mean, cov)
        }
    }
}

/// One signature per class `0..n_classes` from instances `x` (N×d) labeled
/// with `labels` (values in `0..n_classes`).
pub fn estimate_signatures(
    x: &DMatrix<f64>,
    labels: &[usize],
    n_classes: usize,
    mode: CovarianceMode,
    ridge: f64,
) -> Result<Vec<GaussianSignature>> {
    if labels.len() != x.nrows() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(ZslError::InvalidArgument(format!("ridge must be positive, got {ridge}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ZslError::NonFinite("signature input".into()));
    }
    if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ZslError::InvalidArgument(format!("label {bad} out of range")));
    }
    let points = x.transpose();
    crate::par::map_range(n_classes, 1, |k| {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if members.is_empty() {
            return Err(ZslError::EmptyClass(k));
        }
        let sub = points.select_columns(members.iter());
        let weights = vec![1.0; members.len()];
        weighted_signature(&sub, &weights, mode, ridge).map_err(|e| e.with_class(k))
    })
    .into_iter()
    .collect()
}

/// Symmetrizes `m` and raises every eigenvalue to at least `floor`.
pub fn floor_eigenvalues(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&v| v >= floor) {
        return (m + m.transpose()) * 0.5;
    }
    for v in eig.eigenvalues.iter_mut() {
        *v = v.max(floor);
    }
    let r = eig.recompose();
    (&r + r.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariancePayload {
    Matrix(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

/// JSON form of a signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub class: String,
    pub mode: CovarianceMode,
    pub mean: Vec<f64>,
    pub covariance: Option<CovariancePayload>,
}

impl GaussianSignature {
    pub fn to_record(&self, class: &str) -> SignatureRecord {
        let covariance = match &self.covariance {
            Covariance::Unit => None,
            Covariance::Diagonal(v) => Some(CovariancePayload::Diagonal(v.iter().copied().collect())),
            Covariance::Full { matrix, .. } => Some(CovariancePayload::Matrix(
                matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
            )),
        };
        SignatureRecord {
            class: class.to_string(),
            mode: self.mode(),
            mean: self.mean.iter().copied().collect(),
            covariance,
        }
    }

    pub fn from_record(record: &SignatureRecord) -> Result<Self> {
        let mean = DVector::from_vec(record.mean.clone());
        let d = mean.len();
        match (record.mode, &record.covariance) {
            (CovarianceMode::Unit, None) => Ok(GaussianSignature::unit(mean)),
            (CovarianceMode::Diagonal, Some(CovariancePayload::Diagonal(v))) => {
                GaussianSignature::diagonal(mean, DVector::from_vec(v.clone()))
            }
            (CovarianceMode::Full, Some(CovariancePayload::Matrix(rows))) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(ZslError::DimensionMismatch(format!(
                        "class {}: covariance is not {d}x{d}",
                        record.class
                    )));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                GaussianSignature::full(mean, DMatrix::from_row_slice(d, d, &flat))
            }
            (mode, _) => Err(ZslError::InvalidArgument(format!(
                "class {}: covariance payload does not match mode {mode}",
                record.class
            ))),
        }
    }
}

pub fn signatures_to_json(signatures: &[GaussianSignature], class_names: &[String]) -> Result<String> {
    let records: Vec<SignatureRecord> = signatures
        .iter()
        .zip(class_names)
        .map(|(s, c)| s.to_record(c))
        .collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn signatures_from_json(text: &str) -> Result<(Vec<String>, Vec<GaussianSignature>)> {
    let records: Vec<SignatureRecord> = serde_json::from_str(text)?;
    let names = records.iter().map(|r| r.class.clone()).collect();
    let sigs = records.iter().map(GaussianSignature::from_record).collect::<Result<_>>()?;
    Ok((names, sigs))
}

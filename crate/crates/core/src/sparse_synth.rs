//! Sparse coding of unseen label embeddings over the seen embeddings, and
//! transfer of the codes to the seen signatures.
//!
//! The lasso objective is `‖e − Dα‖² + λ‖α‖₁`, with no ½ on the quadratic and
//! no sample scaling. Its coordinate-wise minimizer is
//! `α_j = S(d_jᵀ r_j, λ/2) / ‖d_j‖²` where `r_j` is the residual without atom
//! `j` and `S` is soft-thresholding.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, ZslError};
use crate::signatures::{floor_eigenvalues, CovarianceMode, GaussianSignature};

/// Coefficients below this magnitude are stored as exact zero.
pub const DEAD_ZONE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoParams {
    pub lambda: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LassoParams {
    fn default() -> Self {
        LassoParams {
            lambda: 0.1,
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// Objective at the returned coefficients.
    pub objective: f64,
    /// Completed coordinate-descent sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each sweep.
    pub sweep_objectives: Vec<f64>,
}

impl SparseCode {
    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&a| a == 0.0)
    }

    /// `(index, coefficient)` of the nonzero entries.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &a)| a != 0.0)
            .map(|(j, &a)| (j, a))
            .collect()
    }
}

pub fn lasso_objective(dictionary: &DMatrix<f64>, target: &DVector<f64>, alpha: &[f64], lambda: f64) -> f64 {
    let a = DVector::from_row_slice(alpha);
    (target - dictionary * a).norm_squared() + lambda * alpha.iter().map(|v| v.abs()).sum::<f64>()
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent on `‖target − dictionary·α‖² + λ‖α‖₁`.
/// `dictionary` is D'×K with one atom per column. Stops once a full sweep
/// moves no coordinate by `tol` or more; hitting `max_iters` first returns the
/// current iterate with `converged = false`.
pub fn solve_lasso(
    dictionary: &DMatrix<f64>,
    target: &DVector<f64>,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<SparseCode> {
    let (rows, atoms) = dictionary.shape();
    if target.len() != rows {
        return Err(ZslError::DimensionMismatch(format!(
            "dictionary has {rows} rows, target {}",
            target.len()
        )));
    }
    if atoms == 0 {
        return Err(ZslError::InvalidArgument("empty dictionary".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) || !(tol > 0.0) {
        return Err(ZslError::InvalidArgument(format!(
            "need lambda >= 0 and tol > 0, got lambda={lambda}, tol={tol}"
        )));
    }
    if dictionary.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(ZslError::NonFinite("lasso input".into()));
    }
    let sq_norms: Vec<f64> = dictionary.column_iter().map(|c| c.norm_squared()).collect();
    if let Some(j) = sq_norms.iter().position(|&n| n == 0.0) {
        return Err(ZslError::InvalidArgument(format!("dictionary atom {j} is zero")));
    }

    let half_lambda = 0.5 * lambda;
    let mut alpha = vec![0.0; atoms];
    let mut residual = target.clone();
    let mut sweep_objectives = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        let mut max_step: f64 = 0.0;
        for j in 0..atoms {
            let col = dictionary.column(j);
            let old = alpha[j];
            let rho = col.dot(&residual) + sq_norms[j] * old;
            let new = soft_threshold(rho, half_lambda) / sq_norms[j];
            let step = new - old;
            if step != 0.0 {
                residual.axpy(-step, &col, 1.0);
                alpha[j] = new;
                max_step = max_step.max(step.abs());
            }
        }
        iterations += 1;
        let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        sweep_objectives.push(residual.norm_squared() + lambda * l1);
        if max_step < tol {
            converged = true;
            break;
        }
    }

    for a in alpha.iter_mut() {
        if a.abs() < DEAD_ZONE {
            *a = 0.0;
        }
    }
    let objective = lasso_objective(dictionary, target, &alpha, lambda);
    Ok(SparseCode {
        coefficients: alpha,
        objective,
        iterations,
        converged,
        sweep_objectives,
    })
}

/// Transfers a code to the seen signatures: `μ = Σ α_j μ_j`, and for the
/// covariance Unit stays identity, Diagonal is `Σ α_j diag_j` floored at
/// `ridge`, Full is `Σ α_j Σ_j` symmetrized with eigenvalues floored at `ridge`.
pub fn synthesize_signature(
    seen: &[GaussianSignature],
    coefficients: &[f64],
    mode: CovarianceMode,
    ridge: f64,
) -> Result<GaussianSignature> {
    if seen.len() != coefficients.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} coefficients for {} seen signatures",
            coefficients.len(),
            seen.len()
        )));
    }
    let first = seen
        .first()
        .ok_or_else(|| ZslError::InvalidArgument("no seen signatures".into()))?;
    let d = first.dim();
    if let Some(bad) = seen.iter().find(|s| s.dim() != d || s.mode() != mode) {
        return Err(ZslError::DimensionMismatch(format!(
            "seen signatures must all be {mode} with dimension {d}; found {} with dimension {}",
            bad.mode(),
            bad.dim()
        )));
    }
    if coefficients.iter().all(|&a| a == 0.0) {
        return Err(ZslError::DegenerateCode);
    }

    let mut mean = DVector::zeros(d);
    for (s, &a) in seen.iter().zip(coefficients) {
        if a != 0.0 {
            mean.axpy(a, s.mean(), 1.0);
        }
    }
    match mode {
        CovarianceMode::Unit => Ok(GaussianSignature::unit(mean)),
        CovarianceMode::Diagonal => {
            let mut diag = DVector::zeros(d);
            for (s, &a) in seen.iter().zip(coefficients) {
                if a != 0.0 {
                    if let crate::signatures::Covariance::Diagonal(v) = s.covariance() {
                        diag.axpy(a, v, 1.0);
                    }
                }
            }
            diag.apply(|v| *v = v.max(ridge));
            GaussianSignature::diagonal(mean, diag)
        }
        CovarianceMode::Full => {
            let mut cov = DMatrix::zeros(d, d);
            for (s, &a) in seen.iter().zip(coefficients) {
                if a != 0.0 {
                    if let crate::signatures::Covariance::Full { matrix, .. } = s.covariance() {
                        cov += matrix * a;
                    }
                }
            }
            GaussianSignature::full(mean, floor_eigenvalues(&cov, ridge))
        }
    }
}

/// Virtual signatures for every unseen class.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub codes: Vec<SparseCode>,
    pub signatures: Vec<GaussianSignature>,
    /// Classes whose code came out all zero and fell back to the unweighted
    /// average of the seen signatures.
    pub fallback: Vec<bool>,
}

impl Synthesis {
    pub fn fallback_count(&self) -> usize {
        self.fallback.iter().filter(|&&f| f).count()
    }
}

/// Codes each unseen embedding row over the seen embedding rows and transfers
/// the codes. Embedding matrices hold one class per row.
pub fn synthesize_all(
    seen_embeddings: &DMatrix<f64>,
    unseen_embeddings: &DMatrix<f64>,
    seen_signatures: &[GaussianSignature],
    params: &LassoParams,
    mode: CovarianceMode,
    ridge: f64,
) -> Result<Synthesis> {
    if seen_embeddings.ncols() != unseen_embeddings.ncols() {
        return Err(ZslError::DimensionMismatch(format!(
            "seen embeddings have {} columns, unseen {}",
            seen_embeddings.ncols(),
            unseen_embeddings.ncols()
        )));
    }
    if seen_embeddings.nrows() != seen_signatures.len() {
        return Err(ZslError::DimensionMismatch(format!(
            "{} seen embeddings for {} seen signatures",
            seen_embeddings.nrows(),
            seen_signatures.len()
        )));
    }
    let dictionary = seen_embeddings.transpose();
    let k_seen = seen_signatures.len();
    let results = crate::par::map_range(unseen_embeddings.nrows(), 1, |u| -> Result<_> {
        let target = unseen_embeddings.row(u).transpose();
        let code = solve_lasso(&dictionary, &target, params.lambda, params.tol, params.max_iters)?;
        if !code.converged {
            log::warn!("lasso for unseen class {u} stopped after {} sweeps without converging", code.iterations);
        }
        match synthesize_signature(seen_signatures, &code.coefficients, mode, ridge) {
            Ok(sig) => Ok((code, sig, false)),
            Err(ZslError::DegenerateCode) => {
                log::warn!("unseen class {u}: all-zero sparse code, using the seen average");
                let uniform = vec![1.0 / k_seen as f64; k_seen];
                let sig = synthesize_signature(seen_signatures, &uniform, mode, ridge)?;
                Ok((code, sig, true))
            }
            Err(e) => Err(e),
        }
    });
    let mut out = Synthesis {
        codes: Vec::new(),
        signatures: Vec::new(),
        fallback: Vec::new(),
    };
    for r in results {
        let (code, sig, fb) = r?;
        out.codes.push(code);
        out.signatures.push(sig);
        out.fallback.push(fb);
    }
    Ok(out)
}

/// JSON object: unseen class → `[[seen class, coefficient], ...]` (nonzeros).
pub fn codes_to_json(codes: &[SparseCode], unseen_names: &[String], seen_names: &[String]) -> Result<String> {
    let mut map = serde_json::Map::new();
    for (code, name) in codes.iter().zip(unseen_names) {
        let pairs: Vec<serde_json::Value> = code
            .support()
            .into_iter()
            .map(|(j, a)| serde_json::json!([seen_names[j], a]))
            .collect();
        map.insert(name.clone(), serde_json::Value::Array(pairs));
    }
    Ok(serde_json::to_string_pretty(&map)?)
}

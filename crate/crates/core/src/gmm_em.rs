//! Gaussian-mixture EM over the unlabeled unseen instances.
//!
//! The M-step normalizes component means and covariances by the soft count
//! `N_k = Σₙ r_nk` (not by the total instance count), which is what keeps the
//! log-likelihood non-decreasing from one iteration to the next.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Result, ZslError};
use crate::par::map_range;
use crate::signatures::{weighted_signature, CovarianceMode, GaussianSignature, SignatureRecord};

/// Soft counts below this are treated as a collapsed component.
pub const COLLAPSE_THRESHOLD: f64 = 1e-8;

const ROW_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    weights: Vec<f64>,
    components: Vec<GaussianSignature>,
    mode: CovarianceMode,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianSignature>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| ZslError::InvalidArgument("mixture needs at least one component".into()))?;
        let (d, mode) = (first.dim(), first.mode());
        if weights.len() != components.len() {
            return Err(ZslError::DimensionMismatch(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if components.iter().any(|c| c.dim() != d || c.mode() != mode) {
            return Err(ZslError::InvalidArgument(
                "mixture components must share dimension and covariance mode".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(ZslError::InvalidArgument(format!(
                "mixing weights must be a probability vector (sum {total})"
            )));
        }
        Ok(MixtureModel {
            weights,
            components,
            mode,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianSignature] {
        &self.components
    }

    pub fn mode(&self) -> CovarianceMode {
        self.mode
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn to_json(&self, class_names: &[String]) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            weights: &'a [f64],
            components: Vec<SignatureRecord>,
        }
        let doc = Doc {
            weights: &self.weights,
            components: self
                .components
                .iter()
                .zip(class_names)
                .map(|(c, n)| c.to_record(n))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Uniform weights over the given components.
pub fn init_mixture(signatures: Vec<GaussianSignature>) -> Result<MixtureModel> {
    if signatures.is_empty() {
        return Err(ZslError::InvalidArgument("no signatures to initialize from".into()));
    }
    let k = signatures.len();
    MixtureModel::new(vec![1.0 / k as f64; k], signatures)
}

/// Posterior component probabilities, one row per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ZslError::DimensionMismatch("ragged responsibility rows".into()));
        }
        Ok(Responsibilities {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.cols..(n + 1) * self.cols]
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.data[n * self.cols + k]
    }

    fn column(&self, k: usize) -> Vec<f64> {
        (0..self.rows).map(|n| self.get(n, k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseEvent {
    pub iteration: usize,
    pub component: usize,
    /// Instance the component was reseeded at.
    pub instance: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitTrace {
    /// Log-likelihood of the initial model followed by one entry per M-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    /// M-steps performed.
    pub iterations: usize,
    pub collapses: Vec<CollapseEvent>,
}

impl FitTrace {
    /// `iteration,log_likelihood` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,log_likelihood\n");
        for (i, ll) in self.log_likelihood.iter().enumerate() {
            out.push_str(&format!("{i},{ll}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmOptions {
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    pub max_iters: usize,
    pub ridge: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            tol: 1e-6,
            max_iters: 200,
            ridge: 1e-4,
        }
    }
}

fn check_points(model: &MixtureModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.dim() {
        return Err(ZslError::DimensionMismatch(format!(
            "model has dimension {}, data has {} columns",
            model.dim(),
            x.ncols()
        )));
    }
    Ok(x.transpose())
}

/// `ln π_k + ln N(x | μ_k, Σ_k)` for each component.
fn weighted_log_densities(model: &MixtureModel, point: &[f64], out: &mut [f64]) {
    for (k, (c, &w)) in model.components.iter().zip(&model.weights).enumerate() {
        out[k] = w.ln() + c.log_density_unchecked(point);
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Responsibilities and per-row log-likelihoods.
fn posterior(model: &MixtureModel, points: &DMatrix<f64>) -> Result<(Responsibilities, f64)> {
    let (d, n) = points.shape();
    let k = model.n_components();
    let flat = points.as_slice();
    let rows = map_range(n, ROW_CHUNK, |i| {
        let mut w = vec![0.0; k];
        weighted_log_densities(model, &flat[i * d..(i + 1) * d], &mut w);
        let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in w.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        for v in w.iter_mut() {
            *v /= total;
        }
        (w, m + total.ln())
    });
    let mut data = Vec::with_capacity(n * k);
    let mut ll = 0.0;
    for (i, (r, lse)) in rows.into_iter().enumerate() {
        if !lse.is_finite() {
            return Err(ZslError::NonFinite(format!("log-likelihood at row {i}")));
        }
        ll += lse;
        data.extend(r);
    }
    Ok((Responsibilities { rows: n, cols: k, data }, ll))
}

/// `Σₙ ln Σ_k π_k N(xₙ | μ_k, Σ_k)`, rows of `x` being instances.
pub fn log_likelihood(model: &MixtureModel, x: &DMatrix<f64>) -> Result<f64> {
    let points = check_points(model, x)?;
    let (d, n) = points.shape();
    let k = model.n_components();
    let flat = points.as_slice();
    let per_row = map_range(n, ROW_CHUNK, |i| {
        let mut w = vec![0.0; k];
        weighted_log_densities(model, &flat[i * d..(i + 1) * d], &mut w);
        log_sum_exp(&w)
    });
    let mut total = 0.0;
    for (i, v) in per_row.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(ZslError::NonFinite(format!("log-likelihood at row {i}")));
        }
        total += v;
    }
    Ok(total)
}

pub fn e_step(model: &MixtureModel, x: &DMatrix<f64>) -> Result<Responsibilities> {
    let points = check_points(model, x)?;
    posterior(model, &points).map(|(r, _)| r)
}

pub fn m_step(model: &MixtureModel, x: &DMatrix<f64>, r: &Responsibilities, ridge: f64) -> Result<MixtureModel> {
    let points = check_points(model, x)?;
    m_step_points(model, &points, r, ridge, 0, false).map(|(m, _)| m)
}

/// `Σₙ wₙ ln N(xₙ | sig)`.
fn weighted_log_density_sum(sig: &GaussianSignature, points: &DMatrix<f64>, weights: &[f64]) -> f64 {
    let d = points.nrows();
    let flat = points.as_slice();
    weights
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(i, &w)| w * sig.log_density_unchecked(&flat[i * d..(i + 1) * d]))
        .sum()
}

fn m_step_points(
    model: &MixtureModel,
    points: &DMatrix<f64>,
    r: &Responsibilities,
    ridge: f64,
    iteration: usize,
    keep_better: bool,
) -> Result<(MixtureModel, Vec<CollapseEvent>)> {
    let n = points.ncols();
    let k = model.n_components();
    if r.nrows() != n || r.ncols() != k {
        return Err(ZslError::DimensionMismatch(format!(
            "responsibilities are {}x{}, expected {n}x{k}",
            r.nrows(),
            r.ncols()
        )));
    }
    let mode = model.mode;
    let updates = map_range(k, 1, |j| -> Result<Option<(f64, GaussianSignature)>> {
        let weights = r.column(j);
        let soft_count: f64 = weights.iter().sum();
        if soft_count < COLLAPSE_THRESHOLD {
            return Ok(None);
        }
        let sig = weighted_signature(points, &weights, mode, ridge).map_err(|e| e.with_class(j))?;
        if keep_better && mode != CovarianceMode::Unit {
            // the ridge makes the update inexact; never accept one that lowers
            // this component's share of the expected complete-data likelihood
            let old = &model.components[j];
            if weighted_log_density_sum(&sig, points, &weights) < weighted_log_density_sum(old, points, &weights) {
                return Ok(Some((soft_count, old.clone())));
            }
        }
        Ok(Some((soft_count, sig)))
    });

    let mut counts = vec![0.0; k];
    let mut components = Vec::with_capacity(k);
    let mut collapsed = Vec::new();
    for (j, u) in updates.into_iter().enumerate() {
        match u? {
            Some((c, sig)) => {
                counts[j] = c;
                components.push(sig);
            }
            None => {
                collapsed.push(j);
                components.push(model.components[j].clone());
            }
        }
    }

    let mut events = Vec::new();
    if !collapsed.is_empty() {
        // reseed at the least confidently explained instances
        let mut order: Vec<usize> = (0..n).collect();
        let confidence: Vec<f64> = (0..n)
            .map(|i| r.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        order.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]).then(a.cmp(&b)));
        let share = 1.0 / n as f64;
        // a collapsed component's own covariance is usually what starved it
        let pooled = weighted_signature(points, &vec![share; n], mode, ridge)?;
        for (slot, &j) in collapsed.iter().enumerate() {
            let inst = order[slot % n];
            let mean = points.column(inst).into_owned();
            components[j] = pooled.with_mean(mean)?;
            counts[j] = share * n as f64;
            log::warn!("EM iteration {iteration}: component {j} collapsed, reseeded at instance {inst}");
            events.push(CollapseEvent {
                iteration,
                component: j,
                instance: inst,
            });
        }
    }

    let total: f64 = counts.iter().sum();
    let weights = counts.iter().map(|c| c / total).collect();
    Ok((
        MixtureModel {
            weights,
            components,
            mode,
        },
        events,
    ))
}

/// Alternates E- and M-steps until the relative log-likelihood change drops
/// below `options.tol` or `options.max_iters` M-steps have run. A component
/// update that would lower its expected complete-data log-likelihood is
/// skipped, so the trace never decreases.
pub fn fit(model: MixtureModel, x: &DMatrix<f64>, options: &EmOptions) -> Result<(MixtureModel, FitTrace)> {
    if !(options.tol > 0.0) || options.max_iters == 0 {
        return Err(ZslError::InvalidArgument(format!(
            "EM needs tol > 0 and max_iters >= 1 (got {} and {})",
            options.tol, options.max_iters
        )));
    }
    let points = check_points(&model, x)?;
    let mut model = model;
    let mut trace = FitTrace::default();
    loop {
        let (r, ll) = posterior(&model, &points)?;
        if let Some(&prev) = trace.log_likelihood.last() {
            trace.log_likelihood.push(ll);
            if (ll - prev).abs() < options.tol * ll.abs() {
                trace.converged = true;
                break;
            }
        } else {
            trace.log_likelihood.push(ll);
        }
        if trace.iterations == options.max_iters {
            break;
        }
        trace.iterations += 1;
        let (next, events) = m_step_points(&model, &points, &r, options.ridge, trace.iterations, true)?;
        trace.collapses.extend(events);
        model = next;
    }
    Ok((model, trace))
}

/// Maximum-posterior component per instance; ties go to the lowest index.
pub fn predict(model: &MixtureModel, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    let points = check_points(model, x)?;
    let (d, n) = points.shape();
    let k = model.n_components();
    let flat = points.as_slice();
    Ok(map_range(n, ROW_CHUNK, |i| {
        let mut w = vec![0.0; k];
        weighted_log_densities(model, &flat[i * d..(i + 1) * d], &mut w);
        let mut best = 0;
        for j in 1..k {
            if w[j] > w[best] {
                best = j;
            }
        }
        best
    }))
}

/// Simplest covariance mode the expected class size supports: Unit below `d`
/// instances per class, Diagonal below `lambda·d²`, Full otherwise.
pub fn select_mode(min_class_size: f64, dim: usize, lambda: f64) -> CovarianceMode {
    let d = dim as f64;
    if min_class_size < d {
        CovarianceMode::Unit
    } else if min_class_size < lambda * d * d {
        CovarianceMode::Diagonal
    } else {
        CovarianceMode::Full
    }
}

use std::borrow::Cow;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DVector;

use super::metrics::Accuracy;
use super::report::{ExperimentReport, TrialFailure, TrialFlags, TrialPredictions, TrialResult};
use super::{ExperimentConfig, Method};
use crate::dataset::{apply_split, ClassId, Partition, SplitSpec, ZslDataset};
use crate::dimred::fit_pca;
use crate::error::{Result, ZslError};
use crate::gmm_em::{fit, init_mixture, predict, select_mode, MixtureModel};
use crate::rng::{SplitMix64, Stream};
use crate::signatures::{default_ridge, estimate_signatures, CovarianceMode, GaussianSignature};
use crate::sparse_synth::synthesize_all;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// Every class of the dataset.
    All,
    /// Only the given unseen classes.
    Split,
}

/// Applies the configured PCA, fitted on all instances. Borrows the input
/// when PCA is off.
pub fn project_features<'a>(dataset: &'a ZslDataset, config: &ExperimentConfig) -> Result<Cow<'a, ZslDataset>> {
    if config.pca_dim == 0 {
        return Ok(Cow::Borrowed(dataset));
    }
    let pca = fit_pca(dataset.features(), config.pca_dim)?;
    let projected = pca.transform(dataset.features())?;
    Ok(Cow::Owned(dataset.with_features(projected)?))
}

fn ridge_for(dataset: &ZslDataset, config: &ExperimentConfig) -> f64 {
    config.ridge.unwrap_or_else(|| default_ridge(dataset.features()))
}

fn mode_for(config: &ExperimentConfig, min_class_size: f64, dim: usize) -> CovarianceMode {
    config
        .covariance_mode
        .unwrap_or_else(|| select_mode(min_class_size, dim, config.support_lambda))
}

fn uniform_mixture(signatures: Vec<GaussianSignature>) -> Result<MixtureModel> {
    init_mixture(signatures)
}

fn to_dataset_ids(local: &[usize], classes: &[ClassId]) -> Vec<ClassId> {
    local.iter().map(|&i| classes[i]).collect()
}

/// Fits one Gaussian per class from true labels and classifies by maximum
/// log-density with equal priors. `Scope::Split` restricts both fitting and
/// evaluation to `unseen`.
pub fn run_upper_bound(
    dataset: &ZslDataset,
    scope: Scope,
    unseen: &[ClassId],
    config: &ExperimentConfig,
) -> Result<Accuracy> {
    config.validate()?;
    let data = project_features(dataset, config)?;
    let ridge = ridge_for(&data, config);
    match scope {
        Scope::All => {
            let counts = data.class_counts();
            let min = counts.iter().copied().min().unwrap_or(0) as f64;
            let mode = mode_for(config, min, data.feature_dim());
            let (acc, _) = upper_bound_on(data.features(), data.labels(), data.n_classes(), mode, ridge)?;
            Ok(acc)
        }
        Scope::Split => {
            let (_, part) = apply_split(&data, unseen)?;
            let min = min_count(&part) as f64;
            let mode = mode_for(config, min, data.feature_dim());
            let (acc, _) = upper_bound_on(&part.features, &part.labels, part.classes.len(), mode, ridge)?;
            Ok(acc)
        }
    }
}

fn min_count(part: &Partition) -> usize {
    let mut counts = vec![0usize; part.classes.len()];
    for &l in &part.labels {
        counts[l] += 1;
    }
    counts.into_iter().min().unwrap_or(0)
}

fn upper_bound_on(
    x: &nalgebra::DMatrix<f64>,
    labels: &[usize],
    classes: usize,
    mode: CovarianceMode,
    ridge: f64,
) -> Result<(Accuracy, Vec<usize>)> {
    let sigs = estimate_signatures(x, labels, classes, mode, ridge)?;
    let model = uniform_mixture(sigs)?;
    let pred = predict(&model, x)?;
    Ok((Accuracy::of(&pred, labels)?, pred))
}

/// Synthesized signatures used directly on the unseen instances.
pub fn run_inductive(dataset: &ZslDataset, unseen: &[ClassId], config: &ExperimentConfig) -> Result<TrialResult> {
    run_single(dataset, unseen, config, &[Method::Inductive])
}

/// Synthesis followed by EM refinement on the unseen instances. Both the
/// inductive and transductive accuracies are filled in.
pub fn run_transductive(dataset: &ZslDataset, unseen: &[ClassId], config: &ExperimentConfig) -> Result<TrialResult> {
    run_single(dataset, unseen, config, &[Method::Inductive, Method::Transductive])
}

/// EM started from randomly chosen unseen instances, scored with component
/// `k` standing for the `k`-th unseen class.
pub fn run_baseline_random_init(
    dataset: &ZslDataset,
    unseen: &[ClassId],
    config: &ExperimentConfig,
) -> Result<TrialResult> {
    run_single(dataset, unseen, config, &[Method::Baseline])
}

fn run_single(dataset: &ZslDataset, unseen: &[ClassId], config: &ExperimentConfig, methods: &[Method]) -> Result<TrialResult> {
    config.validate()?;
    let data = project_features(dataset, config)?;
    let ridge = ridge_for(&data, config);
    let counter = AtomicUsize::new(0);
    run_trial(&data, 0, unseen, config, methods, ridge, &counter)
}

fn run_trial(
    data: &ZslDataset,
    trial: usize,
    unseen_ids: &[ClassId],
    config: &ExperimentConfig,
    methods: &[Method],
    ridge: f64,
    em_calls: &AtomicUsize,
) -> Result<TrialResult> {
    let (seen, unseen) = apply_split(data, unseen_ids)?;
    let dim = data.feature_dim();
    let k_unseen = unseen.classes.len();
    let expected_unseen = unseen.n_instances() as f64 / k_unseen as f64;
    let min_size = (min_count(&seen) as f64).min(expected_unseen);
    let mode = mode_for(config, min_size, dim);
    let wants = |m: Method| methods.contains(&m);

    let mut result = TrialResult {
        trial,
        unseen: unseen.classes.iter().map(|&c| data.class_names()[c].clone()).collect(),
        unseen_ids: unseen.classes.clone(),
        covariance_mode: mode,
        upper_bound: None,
        inductive: None,
        transductive: None,
        baseline: None,
        em_iterations: None,
        baseline_em_iterations: None,
        flags: TrialFlags::default(),
        predictions: None,
    };
    let mut preds = TrialPredictions::default();

    if wants(Method::UpperBound) {
        let ub_mode = mode_for(config, min_count(&unseen) as f64, dim);
        let (acc, pred) = upper_bound_on(&unseen.features, &unseen.labels, k_unseen, ub_mode, ridge)?;
        result.upper_bound = Some(acc);
        preds.upper_bound = Some(to_dataset_ids(&pred, &unseen.classes));
    }

    if wants(Method::Inductive) || wants(Method::Transductive) {
        let seen_sigs = estimate_signatures(&seen.features, &seen.labels, seen.classes.len(), mode, ridge)?;
        let synthesis = synthesize_all(
            &seen.embeddings,
            &unseen.embeddings,
            &seen_sigs,
            &config.lasso_params(),
            mode,
            ridge,
        )?;
        result.flags.lasso_not_converged = synthesis.codes.iter().filter(|c| !c.converged).count();
        result.flags.zero_code_classes = synthesis
            .fallback
            .iter()
            .zip(&result.unseen)
            .filter(|(&f, _)| f)
            .map(|(_, name)| name.clone())
            .collect();
        let init = uniform_mixture(synthesis.signatures)?;
        if wants(Method::Inductive) {
            let pred = predict(&init, &unseen.features)?;
            result.inductive = Some(Accuracy::of(&pred, &unseen.labels)?);
            preds.inductive = Some(to_dataset_ids(&pred, &unseen.classes));
        }
        if wants(Method::Transductive) {
            em_calls.fetch_add(1, Ordering::Relaxed);
            let (model, trace) = fit(init, &unseen.features, &config.em_options(ridge))?;
            let pred = predict(&model, &unseen.features)?;
            result.transductive = Some(Accuracy::of(&pred, &unseen.labels)?);
            result.em_iterations = Some(trace.iterations);
            result.flags.em_not_converged = !trace.converged;
            result.flags.collapsed_components += trace.collapses.len();
            preds.transductive = Some(to_dataset_ids(&pred, &unseen.classes));
        }
    }

    if wants(Method::Baseline) {
        let mut rng = SplitMix64::stream(config.seed, Stream::Baseline, trial as u64);
        if unseen.n_instances() < k_unseen {
            return Err(ZslError::InvalidSplit(format!(
                "{} unseen instances for {k_unseen} unseen classes",
                unseen.n_instances()
            )));
        }
        let picks = rng.sample_distinct(unseen.n_instances(), k_unseen);
        let sigs = picks
            .iter()
            .map(|&i| GaussianSignature::unit(DVector::from_iterator(dim, unseen.features.row(i).iter().copied())))
            .collect();
        em_calls.fetch_add(1, Ordering::Relaxed);
        let (model, trace) = fit(uniform_mixture(sigs)?, &unseen.features, &config.em_options(ridge))?;
        let pred = predict(&model, &unseen.features)?;
        result.baseline = Some(Accuracy::of(&pred, &unseen.labels)?);
        result.baseline_em_iterations = Some(trace.iterations);
        result.flags.baseline_not_converged = !trace.converged;
        result.flags.collapsed_components += trace.collapses.len();
        preds.baseline = Some(to_dataset_ids(&pred, &unseen.classes));
    }

    if config.keep_predictions {
        result.predictions = Some(preds);
    }
    Ok(result)
}

/// Runs `methods` on every trial of `splits` and aggregates the accuracies.
/// A trial that fails is recorded in `failures` and left out of the
/// aggregates.
pub fn run_trials(
    dataset: &ZslDataset,
    splits: &SplitSpec,
    config: &ExperimentConfig,
    methods: &[Method],
) -> Result<ExperimentReport> {
    run_trials_observed(dataset, splits, config, methods, &AtomicUsize::new(0))
}

/// [`run_trials`] that also counts EM fits in `em_calls`.
pub fn run_trials_observed(
    dataset: &ZslDataset,
    splits: &SplitSpec,
    config: &ExperimentConfig,
    methods: &[Method],
    em_calls: &AtomicUsize,
) -> Result<ExperimentReport> {
    config.validate()?;
    splits.validate(dataset.n_classes())?;
    if methods.is_empty() {
        return Err(ZslError::InvalidArgument("no methods requested".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let data = project_features(dataset, config)?;
    let ridge = ridge_for(&data, config);
    let outcomes = crate::par::with_workers(config.workers, || {
        crate::par::map_range(splits.trials.len(), 1, |t| {
            run_trial(&data, t, &splits.trials[t], config, &methods, ridge, em_calls)
        })
    });

    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (t, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => trials.push(r),
            Err(e) => {
                log::warn!("trial {t} failed: {e}");
                failures.push(TrialFailure { trial: t, message: e.to_string() });
            }
        }
    }
    Ok(ExperimentReport::assemble(config.clone(), methods, trials, failures))
}

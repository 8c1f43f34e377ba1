use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use zsl_core::dataset::{generate_splits, load_dataset_fused, write_dataset_csv, SplitSpec, ZslDataset};
use zsl_core::experiments::{
    class_name, generate_synthetic, run_trials, run_upper_bound, ExperimentConfig, ExperimentReport, Method,
    Metric, Scope,
};
use zsl_core::signatures::CovarianceMode;

mod config;

use config::{parse_synthetic, split_list, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "zsl", version, about = "Zero-shot classification by synthesized Gaussian signatures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run experiment protocols over a set of splits and write a report.
    Run(RunArgs),
    /// Write a random-split file.
    Splits(SplitsArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Classify with Gaussians fitted from the true labels.
    UpperBound(UpperBoundArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    All,
    Split,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generate data instead of loading it, e.g. `classes=12 unseen=4 trials=50`.
    #[arg(long, num_args = 0.., value_name = "KEY=VALUE")]
    synthetic: Option<Vec<String>>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Repeat to concatenate several embeddings (e.g. attributes and word vectors).
    #[arg(long)]
    embeddings: Vec<PathBuf>,
    /// Split file; without it `--unseen` and `--trials` draw random splits.
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long)]
    unseen: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Seed for data generation, splits and the baseline.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for trials (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// unit, diagonal, full or auto.
    #[arg(long)]
    mode: Option<String>,
    /// PCA output dimension (0 disables PCA).
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    lasso_lambda: Option<f64>,
    #[arg(long)]
    lasso_tol: Option<f64>,
    #[arg(long)]
    lasso_max_iters: Option<usize>,
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    em_tol: Option<f64>,
    #[arg(long)]
    em_max_iters: Option<usize>,
    #[arg(long)]
    support_lambda: Option<f64>,
    /// overall or macro.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated: upper-bound, inductive, transductive, baseline.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct UpperBoundArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "all")]
    scope: ScopeArg,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct SplitsArgs {
    /// File with one class name per line.
    #[arg(long, conflicts_with = "count")]
    classes_file: Option<PathBuf>,
    /// Number of classes, named c00, c01, ...
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    unseen: usize,
    #[arg(long)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Generator parameters, e.g. `classes=40 separation=6 noise=0.2`.
    #[arg(value_name = "KEY=VALUE")]
    params: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

/// Flag value if given, else the config file value.
fn pick<T>(flag: Option<T>, file: &FileConfig, key: &str) -> Result<Option<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn load_file_config(data: &DataArgs) -> Result<FileConfig> {
    match &data.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn parse_mode(text: &str) -> Result<Option<CovarianceMode>> {
    if text == "auto" {
        return Ok(None);
    }
    text.parse::<CovarianceMode>().map(Some).map_err(|e| anyhow!("{e}"))
}

fn resolve_config(data: &DataArgs, model: &ModelArgs, file: &FileConfig) -> Result<ExperimentConfig> {
    let defaults = ExperimentConfig::default();
    let mode = match model.mode.clone().or_else(|| file.raw("mode").map(str::to_string)) {
        Some(m) => parse_mode(&m)?,
        None => defaults.covariance_mode,
    };
    let metric = match model.metric.clone().or_else(|| file.raw("metric").map(str::to_string)) {
        Some(m) => m.parse::<Metric>().map_err(|e| anyhow!("{e}"))?,
        None => defaults.metric,
    };
    let config = ExperimentConfig {
        pca_dim: pick(model.pca_dim, file, "pca_dim")?.unwrap_or(defaults.pca_dim),
        covariance_mode: mode,
        lasso_lambda: pick(model.lasso_lambda, file, "lasso_lambda")?.unwrap_or(defaults.lasso_lambda),
        lasso_tol: pick(model.lasso_tol, file, "lasso_tol")?.unwrap_or(defaults.lasso_tol),
        lasso_max_iters: pick(model.lasso_max_iters, file, "lasso_max_iters")?.unwrap_or(defaults.lasso_max_iters),
        ridge: pick(model.ridge, file, "ridge")?.or(defaults.ridge),
        em_tol: pick(model.em_tol, file, "em_tol")?.unwrap_or(defaults.em_tol),
        em_max_iters: pick(model.em_max_iters, file, "em_max_iters")?.unwrap_or(defaults.em_max_iters),
        support_lambda: pick(model.support_lambda, file, "support_lambda")?.unwrap_or(defaults.support_lambda),
        metric,
        seed: pick(data.seed, file, "seed")?.unwrap_or(defaults.seed),
        workers: pick(data.workers, file, "workers")?,
        keep_predictions: false,
    };
    config.validate().context("invalid configuration")?;
    Ok(config)
}

struct Loaded {
    dataset: ZslDataset,
    splits: SplitSpec,
    /// Where the data and splits came from, echoed into reports.
    source: Value,
}

fn load_data(data: &DataArgs, file: &FileConfig, seed: u64, need_splits: bool) -> Result<Loaded> {
    let synthetic = match &data.synthetic {
        Some(pairs) => Some(pairs.clone()),
        None => file.raw("synthetic").map(split_list),
    };
    let features = data.features.clone().or_else(|| file.raw("features").map(PathBuf::from));
    let labels = data.labels.clone().or_else(|| file.raw("labels").map(PathBuf::from));
    let mut embeddings = data.embeddings.clone();
    if embeddings.is_empty() {
        embeddings = file.list("embeddings").into_iter().map(PathBuf::from).collect();
    }
    let splits_path = data.splits.clone().or_else(|| file.raw("splits").map(PathBuf::from));
    let mut unseen = pick(data.unseen, file, "unseen")?;
    let mut trials = pick(data.trials, file, "trials")?;

    let (dataset, mut source) = if let Some(pairs) = synthetic {
        if features.is_some() || labels.is_some() || !embeddings.is_empty() {
            bail!("--synthetic cannot be combined with --features/--labels/--embeddings");
        }
        let params = parse_synthetic(&pairs, seed)?;
        unseen = unseen.or(params.unseen);
        trials = trials.or(params.trials);
        let (dataset, _) = generate_synthetic(&params.spec).context("generating synthetic data")?;
        (dataset, json!({ "synthetic": params.spec }))
    } else {
        let features = features.ok_or_else(|| anyhow!("no data: give --synthetic or --features/--labels/--embeddings"))?;
        let labels = labels.ok_or_else(|| anyhow!("--labels is required with --features"))?;
        if embeddings.is_empty() {
            bail!("at least one --embeddings file is required with --features");
        }
        let dataset = load_dataset_fused(&features, &labels, &embeddings)
            .context("loading dataset")?;
        let source = json!({
            "features": features.display().to_string(),
            "labels": labels.display().to_string(),
            "embeddings": embeddings.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        });
        (dataset, source)
    };

    let splits = if let Some(path) = splits_path {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading splits {}", path.display()))?;
        let spec = SplitSpec::from_json(&text, dataset.class_names())
            .with_context(|| format!("parsing splits {}", path.display()))?;
        source["splits"] = json!(path.display().to_string());
        spec
    } else if need_splits {
        let unseen = unseen.ok_or_else(|| anyhow!("give --splits, or --unseen and --trials"))?;
        let trials = trials.ok_or_else(|| anyhow!("give --splits, or --unseen and --trials"))?;
        source["splits"] = json!({ "unseen": unseen, "trials": trials, "seed": seed });
        generate_splits(dataset.n_classes(), unseen, trials, seed).context("drawing random splits")?
    } else {
        SplitSpec::single(Vec::new())
    };
    Ok(Loaded { dataset, splits, source })
}

fn output_dir(data: &DataArgs, file: &FileConfig) -> Result<PathBuf> {
    let dir = data
        .output
        .clone()
        .or_else(|| file.raw("output").map(PathBuf::from))
        .ok_or_else(|| anyhow!("--output is required"))?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn resolve_format(flag: Option<Format>, file: &FileConfig) -> Result<Format> {
    match flag {
        Some(f) => Ok(f),
        None => match file.raw("format") {
            None => Ok(Format::Both),
            Some(text) => Format::from_str(text, true).map_err(|e| anyhow!("bad format `{text}`: {e}")),
        },
    }
}

/// Writes the report files and prints the per-method summary. Returns
/// whether the report is within the failure threshold.
fn emit_report(report: &ExperimentReport, source: Value, dir: &Path, format: Format) -> Result<bool> {
    if matches!(format, Format::Json | Format::Both) {
        let mut doc = serde_json::to_value(report)?;
        doc["data"] = source;
        write(&dir.join("report.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    }
    if matches!(format, Format::Csv | Format::Both) {
        write(&dir.join("trials.csv"), &report.trials_csv())?;
        write(&dir.join("boxplot.csv"), &report.boxplot_csv())?;
    }
    for line in report.summary_lines() {
        println!("{line}");
    }
    for failure in &report.failures {
        eprintln!("trial {} failed: {}", failure.trial, failure.message);
    }
    Ok(report.valid)
}

fn cmd_run(args: &RunArgs) -> Result<bool> {
    let file = load_file_config(&args.data)?;
    let config = resolve_config(&args.data, &args.model, &file)?;
    let methods: Vec<Method> = match args.methods.clone().or_else(|| file.raw("methods").map(str::to_string)) {
        Some(text) => split_list(&text)
            .iter()
            .map(|m| m.parse::<Method>().map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let format = resolve_format(args.format, &file)?;
    let dir = output_dir(&args.data, &file)?;
    let loaded = load_data(&args.data, &file, config.seed, true)?;
    let report = run_trials(&loaded.dataset, &loaded.splits, &config, &methods).context("running trials")?;
    emit_report(&report, loaded.source, &dir, format)
}

fn cmd_upper_bound(args: &UpperBoundArgs) -> Result<bool> {
    let file = load_file_config(&args.data)?;
    let config = resolve_config(&args.data, &args.model, &file)?;
    let scope = match file.raw("scope") {
        Some(text) if args.scope == ScopeArg::All => {
            ScopeArg::from_str(text, true).map_err(|e| anyhow!("bad scope `{text}`: {e}"))?
        }
        _ => args.scope,
    };
    let format = resolve_format(args.format, &file)?;
    let dir = output_dir(&args.data, &file)?;
    match scope {
        ScopeArg::Split => {
            let loaded = load_data(&args.data, &file, config.seed, true)?;
            let report = run_trials(&loaded.dataset, &loaded.splits, &config, &[Method::UpperBound])
                .context("running upper-bound trials")?;
            emit_report(&report, loaded.source, &dir, format)
        }
        ScopeArg::All => {
            let loaded = load_data(&args.data, &file, config.seed, false)?;
            let acc = run_upper_bound(&loaded.dataset, Scope::All, &[], &config).context("upper bound")?;
            let doc = json!({
                "version": zsl_core::VERSION,
                "scope": "all",
                "config": config,
                "data": loaded.source,
                "accuracy": acc,
            });
            write(&dir.join("upper_bound.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))?;
            println!(
                "upper-bound all {} classes: overall {:.4}  macro {:.4}",
                loaded.dataset.n_classes(),
                acc.overall,
                acc.macro_avg
            );
            Ok(true)
        }
    }
}

fn cmd_splits(args: &SplitsArgs) -> Result<bool> {
    let names: Vec<String> = match (&args.classes_file, args.count) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading class list {}", path.display()))?;
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect()
        }
        (None, Some(count)) => (0..count).map(|k| class_name(k, count)).collect(),
        (None, None) => bail!("give --classes-file or --count"),
    };
    let spec = generate_splits(names.len(), args.unseen, args.trials, args.seed).context("drawing splits")?;
    write(&args.output, &(spec.to_json(&names)? + "\n"))?;
    println!("{} trials of {} unseen classes written to {}", args.trials, args.unseen, args.output.display());
    Ok(true)
}

fn cmd_synth(args: &SynthArgs) -> Result<bool> {
    let params = parse_synthetic(&args.params, args.seed)?;
    let (dataset, truth) = generate_synthetic(&params.spec).context("generating synthetic data")?;
    std::fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    write_dataset_csv(&dataset, &args.output).with_context(|| format!("writing dataset to {}", args.output.display()))?;
    let manifest = json!({
        "version": zsl_core::VERSION,
        "generator": zsl_core::rng::GENERATOR,
        "class_names": dataset.class_names(),
        "truth": truth,
    });
    write(&args.output.join("manifest.json"), &(serde_json::to_string_pretty(&manifest)? + "\n"))?;
    println!(
        "{} classes x {} instances in {} dimensions written to {}",
        params.spec.classes,
        params.spec.per_class,
        params.spec.feature_dim,
        args.output.display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Splits(a) => cmd_splits(a),
        Command::Synth(a) => cmd_synth(a),
        Command::UpperBound(a) => cmd_upper_bound(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: too many failed trials; report marked invalid");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

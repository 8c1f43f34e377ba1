//! Evaluation protocols: the labeled upper bound, inductive classification
//! with synthesized signatures, transductive EM refinement, and the
//! random-initialization baseline, aggregated over many seen/unseen splits.

mod config;
mod metrics;
mod protocols;
mod report;
mod synthetic;

pub use config::{ExperimentConfig, Method, Metric};
pub use metrics::{accuracy, summarize, Accuracy, Summary};
pub use protocols::{
    project_features, run_baseline_random_init, run_inductive, run_transductive, run_trials,
    run_trials_observed, run_upper_bound, Scope,
};
pub use report::{ExperimentReport, MethodAggregate, TrialFailure, TrialFlags, TrialResult};
pub use synthetic::{class_name, generate_synthetic, EmbeddingFidelity, SyntheticSpec, SyntheticTruth};

//! Transductive zero-shot classification in a feature space.
//!
//! Each labeled (seen) class is summarized by a Gaussian signature. Signatures
//! for unseen classes are synthesized by sparse-coding their label embeddings
//! over the seen embeddings and transferring the coefficients, then refined on
//! the unlabeled unseen instances with a Gaussian-mixture EM solver.
//!
//! Module map:
//!
//! * [`dataset`]: loading, validation, seeded seen/unseen splits.
//! * [`dimred`]: PCA used to keep covariance estimation well posed.
//! * [`signatures`]: per-class Gaussian estimation and log-densities.
//! * [`sparse_synth`]: lasso coding and virtual signature synthesis.
//! * [`gmm_em`]: mixture EM, prediction.
//! * [`experiments`]: evaluation protocols, synthetic benchmarks and reports.

pub mod dataset;
pub mod dimred;
pub mod error;
pub mod experiments;
pub mod gmm_em;
pub mod par;
pub mod rng;
pub mod signatures;
pub mod sparse_synth;

pub use error::{Result, ZslError};

/// Toolkit version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Robust continual learning from label-noisy data streams.
//!
//! Batches of labeled instances arrive over time and an unknown, fluctuating fraction of their
//! labels is wrong. A label quality model decides which instances look correctly labeled; only
//! those train the task classifier. Extensions add a classifier vote with history reprocessing,
//! oracle queries under a budget, and a single-model variant for expensive classifiers.
//!
//! Modules:
//!
//! - [`data`]: instances, batches, CSV loading, synthetic Gaussian streams, splitting
//! - [`noise`]: symmetric label noise with a per-batch Gaussian level
//! - [`models`]: k-NN, nearest centroid and MLP classifiers
//! - [`frameworks`]: the four framework variants as step functions over explicit state
//! - [`baselines`]: No-Sel, Opt-Sel and Full-Clean
//! - [`metrics`]: per-arrival reports, A / Aᵀ, aggregation across repetitions
//! - [`harness`]: configs, the experiment loop and report files

pub mod baselines;
pub mod data;
pub mod error;
pub mod frameworks;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod noise;

pub use error::{Error, Result};

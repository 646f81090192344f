//! Anchored single-model uncertainty estimation for regression and
//! sequential optimization.
//!
//! The core idea: train one network on `[c, x - c]` tuples where the anchor
//! `c` is re-drawn from the training data every iteration, then read
//! epistemic uncertainty at inference as the spread of predictions across a
//! handful of anchors. The crate also ships the comparator estimators (deep
//! ensembles, MC dropout, an exact GP), kernel analysis tooling that
//! motivates the construction, a benchmark-function suite, an
//! expected-improvement optimization loop, and calibration metrics.

pub mod anchoring;
pub mod baselines;
pub mod benchmarks;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod ntk;
pub mod seqopt;

pub use anchoring::{
    anchored_batch, predict_anchor_ensemble, predict_delta_uq, train_anchor_ensemble,
    train_delta_uq, AnchorEnsemble, AnchoredModel, UncertaintyEstimate,
};
pub use data::{Dataset, Matrix};
pub use error::{Error, Result};

//! Quantile association via conditional concordance (QuACC).
//!
//! The crate estimates the probability that two variables jointly fall
//! below (τ < 0.5) or above (τ ≥ 0.5) their conditional τ-quantiles given a
//! covariate set, tests the independence null with a cross-fitted z-test,
//! and drives the adjacency phase of the PC algorithm with that test.
//!
//! Module map:
//!
//! - [`dataset`]: column-named tables with missingness, preprocessing, folds
//! - [`quantreg`]: linear quantile regression and sandwich density estimates
//! - [`association`]: the QuACC estimator, its variance and the z-test
//! - [`citest`]: conditional independence test contract (QuACC, Fisher-z)
//! - [`skeleton`]: PC adjacency search and majority voting
//! - [`synth`]: copula samplers and synthetic data generators
//! - [`metrics`]: structure recovery and rejection-rate summaries
//! - [`bench`]: seeded simulation harness built on the modules above

pub mod association;
pub mod bench;
pub mod citest;
pub mod dataset;
mod error;
pub mod metrics;
pub mod normal;
pub mod quantreg;
pub mod rng;
pub mod skeleton;
pub mod synth;

pub use error::{QuaccError, Result};

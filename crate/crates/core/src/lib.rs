//! Estimate a study's sample mean and standard deviation from reported
//! summary statistics (quartiles, range, median, ...) with rejection
//! Approximate Bayesian Computation.
//!
//! Two estimators are provided:
//!
//! * [`engine::run_abc_sd`] assumes a single underlying distribution family;
//! * [`engine::run_abc_bma`] averages over a bank of candidate families,
//!   weighting each by its estimated posterior model probability.
//!
//! [`experiments`] contains the Monte Carlo harness used to study their
//! relative errors, and [`baselines`] the closed-form quartile estimator of
//! Wan et al. for comparison.

pub mod baselines;
pub mod cli;
pub mod distributions;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod rng;
mod special;
pub mod summaries;

pub use distributions::{default_priors, Family, FamilyParams, FamilyPrior, Interval, PriorBank};
pub use engine::{run_abc_bma, run_abc_sd, AbcConfig, AcceptedDraw, EstimateResult, EstimatorMode};
pub use error::{Error, Result};
pub use summaries::{Field, SummaryScenario, SummaryStats};

//! Average causal effect estimation with multiply imputed confounders and
//! outcomes.
//!
//! The pipeline is: a Bayesian joint model fitted by data-augmentation
//! Gibbs sampling ([`imputer`]) produces `m` completed datasets; a
//! full-sample estimator is applied to each ([`estimators`]) and combined
//! with Rubin's rule ([`mi`]). [`wild_bootstrap`] builds the martingale
//! difference representation of the MI estimator and resamples it with
//! multiplier weights for a consistent variance estimate. [`sim`] runs the
//! Monte Carlo scenarios and [`io`] handles CSV, configuration and the
//! applied-analysis workflow.

pub mod data;
pub mod error;
pub mod estimators;
pub mod imputer;
pub mod io;
pub mod linalg;
pub mod mi;
pub mod normal;
pub mod probit;
pub mod rng;
pub mod sim;
pub mod wild_bootstrap;

pub use data::{
    validate, CompleteData, EstimatorKind, ImputedDataset, MatchOn, ObservedDataset, ThetaParams, ValidationReport,
};
pub use error::{Error, ErrorClass, Result};

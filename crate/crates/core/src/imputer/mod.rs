//! Bayesian joint model for `(A, X, Y, R)` and its data-augmentation Gibbs
//! sampler, producing posterior draws and multiple imputations.

pub mod conditional;
pub mod gibbs;
pub mod layout;
pub mod likelihood;
pub mod spec;
pub mod wishart;

pub use conditional::{predictive_conditional, ConditionalSampler};
pub use gibbs::{complete_at, gibbs_run, impute_from_chain, multiply_impute, select_draws, GibbsChain};
pub use layout::ThetaLayout;
pub use likelihood::{ScoreContext, UnitValues};
pub use spec::{GibbsConfig, JointModelSpec, Mechanism, MissingnessModel, Predictor, PriorSpec, Selection};

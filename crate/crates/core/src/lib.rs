//! Causal synthetic-data workbench.
//!
//! Generates hybrid synthetic tables (covariates from a generator, treatment
//! and outcome from separately fitted nuisance models), repairs practical
//! positivity violations by pairing extreme-propensity units with nearby
//! synthetic covariates, and benchmarks the OR, IPW, AIPW and TMLE estimators
//! of the average treatment effect through repeated finite-sample replication.

pub mod data;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod generate;
pub mod nuisance;
pub mod parallel;
pub mod positivity;
pub mod rng;
pub mod simengine;

pub use error::{Error, Result};

//! Seemingly unrelated Bayesian additive regression trees.
//!
//! Multivariate sum-of-trees regression with correlated Gaussian errors
//! (continuous outcomes) or correlated latent utilities (binary outcomes),
//! plus a cost-effectiveness layer built on toggled-treatment predictions.

pub mod analysis;
pub mod cea;
pub mod chain;
pub mod cli;
pub mod config;
pub mod data;
pub mod distributions;
pub mod error;
pub mod priors;
pub mod sampler;
pub mod simgen;
pub mod stats;
pub mod trees;

pub use chain::{DrawArray, PosteriorChain};
pub use config::{ConfigOverrides, ModelConfig};
pub use data::{Covariate, Covariates, Dataset, OutcomeMode, OutcomeScaler};
pub use error::{Error, Result};
pub use sampler::{fit, fit_propensity, FitOptions};

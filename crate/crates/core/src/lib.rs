//! Bayesian linear regression and clustered hierarchical linear regression
//! with Gibbs sampling, coordinate-ascent and stochastic variational inference.
pub mod chlrm;
pub mod config;
pub mod dataio;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod exp_family;
pub mod linalg;
pub mod lrm;
pub mod workflow;

pub use error::{Error, Result};

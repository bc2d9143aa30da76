//! Relative goodness-of-fit testing for latent variable models.
//!
//! Two candidate models P and Q, each known only through a conditional
//! likelihood and a latent-variable posterior sampler, are compared on
//! an observed sample by estimating the difference of their squared
//! kernel Stein discrepancies. The marginal score of each model is
//! replaced by a posterior average of conditional scores (computed from
//! MCMC draws), the difference U-statistic is normalized by a studentizing
//! variance estimate, and the one-sided test rejects "P fits at least as
//! well as Q" when the statistic exceeds the standard-normal quantile.
//!
//! Modules:
//! - [`kernels`]: Gaussian and discrete kernels with the derivative /
//!   difference operators the Stein kernel needs.
//! - [`stein`]: score averaging and Stein gram assembly.
//! - [`estimators`]: the KSD U-statistic and the two asymptotic-variance
//!   estimators (U-statistic and V-statistic forms).
//! - [`reltest`]: the decision procedure.
//! - [`models`]: probabilistic PCA, latent Dirichlet allocation and a
//!   Gaussian Dirichlet-process mixture, with samplers.
//! - [`oracles`]: closed-form and brute-force reference computations for
//!   validation.
//! - [`harness`]: the simulation-study engine behind the CLI.

pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod models;
pub mod oracles;
pub mod reltest;
pub mod stein;
pub mod util;

pub use data::{Dataset, Domain};
pub use error::{Error, Result};
pub use estimators::{ksd_exact, ksd_ustat, var_ustat, var_vstat, KsdEstimate, VarianceMethod};
pub use kernels::{median_heuristic, Bandwidth, KernelSpec};
pub use reltest::{normal_cdf, normal_quantile, relative_test, TestConfig, TestReport};
pub use stein::{average_scores, diff_gram, stein_gram, LatentBatch, ScoreMatrix, SteinGram};

/// Version tag stamped into every serialized config and report.
pub const SCHEMA_VERSION: u32 = 1;

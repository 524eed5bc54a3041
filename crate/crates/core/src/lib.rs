//! Quantile martingale posterior.
//!
//! Bayesian nonparametric quantile estimation and linear quantile regression
//! without likelihoods or MCMC. A quantile function is estimated on a uniform
//! grid by a recursive Gaussian-copula update; posterior uncertainty comes
//! from predictive resampling (forward-simulating the same update with
//! uniform draws) or from its Gaussian-process approximation.
//!
//! Modules, bottom-up:
//!
//! - [`kernels`]: normal and bivariate-normal numerics, the copula update term
//!   and the GP covariance kernel.
//! - [`grid`]: grid quantile functions, increasing rearrangement, the implicit
//!   CDF and functionals.
//! - [`estimation`]: fitting `Q_n†` with permutation averaging and prequential
//!   tuning of the bandwidth.
//! - [`resampling`]: exact and GP-approximate posterior sampling and summaries.
//! - [`regression`]: linear quantile regression with Bayesian-bootstrap
//!   covariates.
//! - [`diagnostics`]: quadrature checks of the copula identities and
//!   convergence traces.

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod kernels;
pub mod quadrature;
pub mod regression;
pub mod resampling;
pub mod rng;
pub mod stats;

pub use error::{QmpError, Result};
pub use estimation::{fit, fit_once, FitConfig, FitResult};
pub use grid::{ProperQuantile, QuantileGrid, UniformGrid};
pub use kernels::{Rho, Schedule};
pub use resampling::{sample, summarize, Functional, PosteriorDraws, SampleConfig, SampleMode, Summary};

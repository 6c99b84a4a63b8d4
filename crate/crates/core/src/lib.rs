//! Bayesian mixture cure models with Weibull latency.
//!
//! The main estimator alternates between sampling the latent cure indicators
//! of censored subjects and fitting a Laplace approximation to the posterior
//! conditional on them. A random-walk Metropolis-within-Gibbs sampler and an
//! exact enumeration with tensor quadrature are provided for comparison.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod gibbs;
pub mod laplace;
pub mod marginal;
pub mod mcmc;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod oracle;
pub mod report;

pub use error::{Error, Result};
pub use laplace::{Approximation, ConditionalFit, LaplaceConfig};
pub use marginal::{GaussianMixture, GridDensity, Marginal};
pub use model::{Dataset, LatencyFamily, LatentAssignment, ParameterPoint, PriorSpec};

//! Closed-form risk distributions and Chebyshev generalization bounds for
//! well-specified least-squares regression, checked against a seeded Monte
//! Carlo engine.
//!
//! - [`fixed_design`]: constant design matrix, exact chi-square-mixture laws
//!   of the training, true and testing risks.
//! - [`random_design`]: Gaussian random features, moments of the squared
//!   prediction error and tail bounds.
//! - [`distributions`], [`linalg`], [`montecarlo`]: the numerical plumbing.
//! - [`cli`]: the `ols-risk` command-line harness.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod fixed_design;
pub mod linalg;
pub mod montecarlo;
pub mod random_design;

pub use error::{Error, Result};

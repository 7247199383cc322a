//! Quadratic-variation estimation of the asymptotic variance of Gaussian
//! sequences observed at integer times.
//!
//! The observed sequence is the Ornstein–Uhlenbeck transform
//! `X_t = e^{-θt} ∫_0^t e^{θu} dG_u` of a fractional driver `G`
//! (fractional, sub-fractional or bifractional Brownian motion). The crate
//! computes the exact covariance of `(X_1, …, X_n)`, the moment functionals
//! of the estimator `f̂_n = (1/n) Σ X_i²`, the rate envelopes that govern its
//! normal approximation, and runs Monte-Carlo checks of all of it.
//!
//! ```
//! use qv_core::{make_kernel, KernelFamily, OUSpec, QuadConfig, TimeGrid};
//! use qv_core::{ou_gram, estimators};
//!
//! let kernel = make_kernel(KernelFamily::Sfbm, 0.6, None).unwrap();
//! let spec = OUSpec::new(kernel, 1.0).unwrap();
//! let cov = ou_gram(&spec, &TimeGrid::integers(20), &QuadConfig::default()).unwrap();
//! let report = estimators::cumulants(&cov).unwrap();
//! assert!(report.kappa4 >= 0.0);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covmatrix;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod kernels;
pub mod ou_covariance;
pub mod quadrature;
pub mod rates;
pub mod simulate;

pub use covmatrix::CovMatrix;
pub use error::{Error, Result};
pub use estimators::CumulantReport;
pub use experiments::{ExperimentConfig, ExperimentReport};
pub use kernels::{cov, gram, make_kernel, KernelFamily, KernelSpec, TimeGrid};
pub use ou_covariance::{limit_variance, ou_cov_pair, ou_gram, stationary_fou_acf, OUSpec};
pub use quadrature::QuadConfig;
pub use rates::{RateBranch, SeriesConfig};
pub use simulate::{PathConfig, SampleBatch};

//! The quadratic-variation estimator and the exact moments of its
//! standardized fluctuation.
//!
//! With `C` the covariance of `(X_1, …, X_n)`, the standardized statistic
//! `F_n = Σ (X_i² - E X_i²) / sqrt(n v_n)` lives in the second Wiener chaos,
//! and its cumulants are traces of powers of `C`:
//! `n v_n = 2 tr C²`, `κ3 = 8 tr C³ / (n v_n)^{3/2}`, `κ4 = 48 tr C⁴ / (n v_n)²`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::covmatrix::CovMatrix;
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};

/// `(1/n) Σ X_i²`.
pub fn f_hat(observations: &[f64]) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ss: f64 = observations.iter().map(|x| x * x).sum();
    Ok(ss / observations.len() as f64)
}

/// Mean of the diagonal, `A_n = (1/n) Σ E[X_i²]`.
pub fn a_n(cov: &CovMatrix) -> f64 {
    cov.matrix().trace() / cov.n() as f64
}

/// `v_n = (2/n) Σ_j Σ_k (E[X_j X_k])²`.
pub fn v_n(cov: &CovMatrix) -> f64 {
    2.0 * cov.matrix().norm_squared() / cov.n() as f64
}

pub fn kappa3(cov: &CovMatrix) -> Result<f64> {
    Ok(cumulants(cov)?.kappa3)
}

pub fn kappa4(cov: &CovMatrix) -> Result<f64> {
    Ok(cumulants(cov)?.kappa4)
}

/// `max(κ4, |κ3|)`, the optimal fourth-moment bound on the total-variation
/// distance to N(0,1), up to a universal constant.
pub fn tv_bound(kappa3: f64, kappa4: f64) -> f64 {
    kappa4.max(kappa3.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantReport {
    pub n: usize,
    pub v_n: f64,
    pub kappa3: f64,
    pub kappa4: f64,
    pub tv_bound: f64,
}

/// All moment functionals from a single matrix product.
pub fn cumulants(cov: &CovMatrix) -> Result<CumulantReport> {
    let c = cov.matrix();
    let n = cov.n();
    let c2: DMatrix<f64> = c * c;
    let tr2 = c2.trace();
    // tr(C³) = Σ (C²)_ij C_ij and tr(C⁴) = ‖C²‖_F² for symmetric C
    let tr3 = c2.component_mul(c).sum();
    let tr4 = c2.norm_squared();
    let nv = 2.0 * tr2;
    if !(nv > 0.0) {
        return Err(Error::DegenerateCovariance);
    }
    let kappa3 = 8.0 * tr3 / nv.powf(1.5);
    let kappa4 = 48.0 * tr4 / (nv * nv);
    Ok(CumulantReport {
        n,
        v_n: nv / n as f64,
        kappa3,
        kappa4,
        tv_bound: tv_bound(kappa3, kappa4),
    })
}

/// One application of the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub n: usize,
    pub f_hat: f64,
    /// `A_n`, when the covariance is known.
    pub a_n: Option<f64>,
    /// `√n (f̂_n - f_ref)`.
    pub centered_scaled: f64,
}

pub fn estimate(observations: &[f64], cov: Option<&CovMatrix>, f_ref: f64) -> Result<EstimateResult> {
    let f = f_hat(observations)?;
    let n = observations.len();
    Ok(EstimateResult {
        n,
        f_hat: f,
        a_n: cov.map(a_n),
        centered_scaled: (n as f64).sqrt() * (f - f_ref),
    })
}

/// Inverts the limit variance: the `θ` with `f(θ) = f_value`.
pub fn invert_to_theta(f_value: f64, spec: &KernelSpec) -> Result<f64> {
    if !(f_value > 0.0) || !f_value.is_finite() {
        return Err(Error::NonpositiveInput(f_value));
    }
    let a = spec.memory_index();
    let scale = match spec.family {
        KernelFamily::Bifbm => 2f64.powf(1.0 - spec.k),
        _ => 1.0,
    };
    Ok((scale * a * gamma(2.0 * a) / f_value).powf(1.0 / (2.0 * a)))
}

//! Rate functions, bound envelopes and the limiting variance series.
//!
//! Every envelope here is a rate shape: the true bounds carry unknown
//! multiplicative constants, so only ratios across `n` are meaningful.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::ou_covariance::{fou_acf_asymptotic, stationary_fou_acf, QuadConfig};

/// Tolerance used to decide whether a parameter sits exactly on a branch
/// boundary such as `β = 2/3`.
pub const BRANCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchLabel {
    BoundaryHalf,
    Polynomial,
    LogTwoThirds,
    BerryEsseen,
    LogThreeQuarters,
}

impl fmt::Display for BranchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BranchLabel::BoundaryHalf => "boundary_half",
            BranchLabel::Polynomial => "polynomial",
            BranchLabel::LogTwoThirds => "log_two_thirds",
            BranchLabel::BerryEsseen => "berry_esseen",
            BranchLabel::LogThreeQuarters => "log_three_quarters",
        })
    }
}

/// `n^exponent · log(n)^log_power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBranch {
    pub label: BranchLabel,
    pub exponent: f64,
    pub log_power: f64,
}

impl RateBranch {
    pub fn eval(&self, n: usize) -> f64 {
        let nf = n as f64;
        let mut v = nf.powf(self.exponent);
        if self.log_power != 0.0 {
            v *= nf.ln().powf(self.log_power);
        }
        v
    }
}

fn near(x: f64, y: f64) -> bool {
    (x - y).abs() <= BRANCH_TOL
}

fn check_n(n: usize, min: usize) -> Result<()> {
    check_range(
        "n",
        n as f64,
        n >= min,
        if min == 2 { "n >= 2" } else { "n >= 3" },
    )
}

/// Squared-bias rate: `n^{-1}` for `α < 1/2`, `n^{2α-2}` otherwise.
pub fn phi(alpha: f64, n: usize) -> Result<f64> {
    check_range("alpha", alpha, alpha > 0.0 && alpha < 1.0, "0 < alpha < 1")?;
    check_n(n, 2)?;
    let nf = n as f64;
    Ok(if alpha < 0.5 {
        1.0 / nf
    } else {
        nf.powf(2.0 * alpha - 2.0)
    })
}

/// Variance-limit rate: `n^{-1}` for `α < 1/2`, `n^{4α-3}` for `1/2 <= α < 3/4`.
pub fn psi(alpha: f64, n: usize) -> Result<f64> {
    check_range("alpha", alpha, alpha > 0.0 && alpha < 0.75, "0 < alpha < 3/4")?;
    check_n(n, 2)?;
    let nf = n as f64;
    Ok(if alpha < 0.5 {
        1.0 / nf
    } else {
        nf.powf(4.0 * alpha - 3.0)
    })
}

/// Branch of the total-variation envelope for covariance decay `|t|^{-β}`.
pub fn tv_branch(beta: f64) -> Result<RateBranch> {
    check_range("beta", beta, beta >= 0.5 - BRANCH_TOL, "beta >= 1/2")?;
    let (label, exponent, log_power) = if near(beta, 0.5) {
        (BranchLabel::BoundaryHalf, 0.0, 0.0)
    } else if near(beta, 2.0 / 3.0) {
        (BranchLabel::LogTwoThirds, -0.5, 2.0)
    } else if beta < 2.0 / 3.0 {
        (BranchLabel::Polynomial, 1.5 - 3.0 * beta, 0.0)
    } else {
        (BranchLabel::BerryEsseen, -0.5, 0.0)
    };
    Ok(RateBranch {
        label,
        exponent,
        log_power,
    })
}

pub fn tv_envelope(beta: f64, n: usize) -> Result<f64> {
    check_n(n, 2)?;
    Ok(tv_branch(beta)?.eval(n))
}

/// `√(n/v_n)·bias + tv_envelope(β, n) / min(v_n², v_n^{3/2})`.
pub fn wasserstein_bound(bias: f64, v_n: f64, beta: f64, n: usize) -> Result<f64> {
    check_range("bias", bias, bias >= 0.0, "bias >= 0")?;
    check_range("v_n", v_n, v_n > 0.0, "v_n > 0")?;
    let env = tv_envelope(beta, n)?;
    let scale = (v_n * v_n).min(v_n.powf(1.5));
    Ok((n as f64 / v_n).sqrt() * bias + env / scale)
}

/// Total-variation rate table of the sub-fractional OU estimator.
pub fn sfou_tv_branch(h: f64) -> Result<RateBranch> {
    check_range("hurst", h, h > 0.0 && h <= 0.75 + BRANCH_TOL, "0 < H <= 3/4")?;
    let (label, exponent, log_power) = if near(h, 0.75) {
        (BranchLabel::LogThreeQuarters, 0.0, -1.5)
    } else if near(h, 2.0 / 3.0) {
        (BranchLabel::LogTwoThirds, -0.5, 2.0)
    } else if h < 2.0 / 3.0 {
        (BranchLabel::BerryEsseen, -0.5, 0.0)
    } else {
        (BranchLabel::Polynomial, 6.0 * h - 4.5, 0.0)
    };
    Ok(RateBranch {
        label,
        exponent,
        log_power,
    })
}

pub fn sfou_tv_rate(h: f64, n: usize) -> Result<f64> {
    check_n(n, 3)?;
    Ok(sfou_tv_branch(h)?.eval(n))
}

/// `lim E[V_n²] / log n` when the memory index is exactly 3/4.
pub fn log_case_variance(theta: f64) -> f64 {
    9.0 / (16.0 * theta.powi(4))
}

/// Log-case constant for the bifractional driver at `HK = 3/4`. Only the
/// stationary part of the kernel carries long memory, with weight
/// `2^{1-K}`, so the constant picks up `2^{2-2K}`.
pub fn log_case_variance_bifou(theta: f64, k: f64) -> f64 {
    2f64.powf(2.0 - 2.0 * k) * log_case_variance(theta)
}

/// Truncation control for the variance series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub tail_tol: f64,
    pub max_terms: usize,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig {
            tail_tol: 1e-8,
            max_terms: 1_000_000,
        }
    }
}

/// Terms of the large-lag expansion of the autocovariance used for the tail.
const TAIL_TERMS: usize = 4;

/// Autocovariance sums of the stationary fOU process: `ρ(0)` and
/// `Σ_{i>=1} ρ(i)²`, plus the raw values summed exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct AcfSums {
    pub rho0: f64,
    /// `ρ(1), …, ρ(N)` computed by quadrature.
    pub head: Vec<f64>,
    /// `Σ_{i>=1} ρ(i)²`, head plus analytic tail.
    pub sum_sq: f64,
    /// Estimated error of the tail.
    pub tail_err: f64,
}

/// `Σ_{i>N} i^{-p}` by Euler–Maclaurin, with the first omitted correction as
/// an error estimate.
fn power_tail(p: f64, n: f64) -> (f64, f64) {
    // Bernoulli numbers B2, B4, B6, B8 over (2j)!
    const B: [f64; 4] = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0];
    let mut sum = n.powf(1.0 - p) / (p - 1.0) - 0.5 * n.powf(-p);
    // f^{(2j-1)}(N) = -p(p+1)…(p+2j-2) N^{-p-2j+1}
    let mut rising = p;
    let mut last = 0.0;
    for (j, b) in B.iter().enumerate() {
        let deriv = -rising * n.powf(-p - (2 * j + 1) as f64);
        let term = -b * deriv;
        if j + 1 == B.len() {
            last = term.abs();
        } else {
            sum += term;
        }
        rising *= (p + (2 * j + 1) as f64) * (p + (2 * j + 2) as f64);
    }
    (sum, last)
}

/// Coefficients `a_m` and exponents `γ - m` of the large-lag expansion.
fn expansion(alpha: f64, theta: f64) -> Vec<(f64, f64)> {
    let g = 2.0 * alpha - 1.0;
    let mut falling = 1.0;
    let mut out = Vec::new();
    for m in 1.. {
        falling *= g - (m - 1) as f64;
        if m % 2 == 1 {
            out.push((alpha * falling * theta.powi(-m - 1), g - m as f64));
            if out.len() == TAIL_TERMS {
                break;
            }
        }
    }
    out
}

/// Computes the autocovariance sums, doubling the exactly summed head until
/// the tail error estimate falls below `cfg.tail_tol`.
pub fn acf_sums(alpha: f64, theta: f64, cfg: &SeriesConfig, q: &QuadConfig) -> Result<AcfSums> {
    check_range("alpha", alpha, alpha > 0.0 && alpha < 0.75, "0 < alpha < 3/4")?;
    check_range("theta", theta, theta > 0.0, "theta > 0")?;
    check_range("tail_tol", cfg.tail_tol, cfg.tail_tol > 0.0, "tail_tol > 0")?;
    let rho0 = stationary_fou_acf(alpha, theta, 0, q)?;
    let coeffs = expansion(alpha, theta);
    let mut n = 50usize.max((50.0 / theta).ceil() as usize);
    let mut head: Vec<f64> = Vec::new();
    let mut err = f64::INFINITY;
    while n <= cfg.max_terms {
        let start = head.len() + 1;
        let more = (start..=n)
            .into_par_iter()
            .map(|i| stationary_fou_acf(alpha, theta, i as u64, q))
            .collect::<Result<Vec<f64>>>()?;
        head.extend(more);

        let nf = n as f64;
        let mut tail = 0.0;
        let mut em_err = 0.0;
        for (ak, ek) in &coeffs {
            for (al, el) in &coeffs {
                let (s, e) = power_tail(-(ek + el), nf);
                tail += ak * al * s;
                em_err += (ak * al).abs() * e;
            }
        }
        let (asym, _) = fou_acf_asymptotic(alpha, theta, nf, TAIL_TERMS);
        let rho_n = head[n - 1];
        let rel = if asym != 0.0 {
            ((rho_n - asym) / asym).abs()
        } else {
            0.0
        };
        err = 2.0 * rel * tail.abs() + em_err;
        if err <= cfg.tail_tol {
            let head_sq: f64 = head.iter().map(|r| r * r).sum();
            return Ok(AcfSums {
                rho0,
                head,
                sum_sq: head_sq + tail,
                tail_err: err,
            });
        }
        n *= 2;
    }
    Err(Error::SeriesNotConverged {
        max_terms: cfg.max_terms,
        tail: err,
    })
}

/// Limiting variance `σ² = lim v_n` of the sub-fractional (or fractional) OU
/// estimator, `2ρ(0)² + 4 Σ_{i>=1} ρ(i)²`.
pub fn sigma2_sfou(theta: f64, h: f64, cfg: &SeriesConfig, q: &QuadConfig) -> Result<f64> {
    check_range("hurst", h, h > 0.0 && h < 0.75, "0 < H < 3/4")?;
    let s = acf_sums(h, theta, cfg, q)?;
    Ok(2.0 * s.rho0 * s.rho0 + 4.0 * s.sum_sq)
}

/// Limiting variance of the bifractional OU estimator.
pub fn sigma2_bifou(theta: f64, h: f64, k: f64, cfg: &SeriesConfig, q: &QuadConfig) -> Result<f64> {
    check_range("hurst", h, h > 0.0 && h < 1.0, "0 < H < 1")?;
    check_range("k", k, k > 0.0 && k <= 1.0, "0 < K <= 1")?;
    check_range("hk", h * k, h * k < 0.75, "HK < 3/4")?;
    let s = acf_sums(h * k, theta, cfg, q)?;
    let scale = 2f64.powf(2.0 - 2.0 * k);
    Ok(scale * (2.0 * s.rho0 * s.rho0 + 4.0 * s.sum_sq))
}

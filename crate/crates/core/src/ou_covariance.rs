//! Covariance of the Ornstein–Uhlenbeck transform of a driving kernel.
//!
//! For a driver `G` with covariance `R`, the process
//! `X_t = ∫_0^t e^{-θ(t-u)} dG_u` has
//! `E[X_s X_t] = ∫∫ e^{-θ(s-u)} e^{-θ(t-v)} R(du, dv)`. Integrating by parts
//! on a rectangle `[u0, u1] × [v0, v1]` with `g(u) = e^{-θ(u1-u)}` and
//! `h(v) = e^{-θ(v1-v)}` gives
//!
//! ```text
//! J = R(u1,v1) - e_v R(u1,v0) - e_u R(u0,v1) + e_u e_v R(u0,v0)
//!     - θ ∫ g(u) [R(u,v1) - e_v R(u,v0)] du
//!     - θ ∫ h(v) [R(u1,v) - e_u R(u0,v)] dv
//!     + θ² ∫∫ g h R
//! ```
//!
//! which involves `R` only, never its derivatives (the mixed partial of the
//! bifractional kernel is not integrable across the diagonal). Each kernel is
//! split into [`Component`]s; the double integral of a stationary component
//! `|u-v|^γ` collapses to one dimension in `w = u - v`, that of a sum
//! component `(u+v)^γ` to one dimension in `z = u + v`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::covmatrix::CovMatrix;
use crate::error::{check_range, Error, Result};
use crate::kernels::{pow, Component, KernelFamily, KernelSpec, TimeGrid};
use crate::quadrature::{Quadrature, Rule};

pub use crate::quadrature::QuadConfig;

/// How many times `panels_per_unit` is doubled before giving up.
const MAX_REFINEMENTS: usize = 4;

/// OU transform of a driving kernel with drift rate `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUSpec {
    pub kernel: KernelSpec,
    pub theta: f64,
}

impl OUSpec {
    pub fn new(kernel: KernelSpec, theta: f64) -> Result<Self> {
        check_range("theta", theta, theta > 0.0, "theta > 0")?;
        Ok(OUSpec { kernel, theta })
    }
}

/// `lim E[X_t²]`: `HΓ(2H)/θ^{2H}`, or `2^{1-K} HKΓ(2HK)/θ^{2HK}` for bifBm.
pub fn limit_variance(spec: &OUSpec) -> f64 {
    let a = spec.kernel.memory_index();
    let scale = match spec.kernel.family {
        KernelFamily::Bifbm => 2f64.powf(1.0 - spec.kernel.k),
        _ => 1.0,
    };
    scale * a * gamma(2.0 * a) / spec.theta.powf(2.0 * a)
}

/// Length beyond which the exponential weight makes a contribution
/// negligible, even against kernel values growing polynomially in `scale`.
fn horizon(theta: f64, scale: f64) -> f64 {
    (45.0 + 2.0 * (1.0 + scale).ln()) / theta
}

/// Runs `f` at `q` and at successively doubled panel densities until two
/// consecutive values agree to `abs_tol`.
fn refine(q: &QuadConfig, gamma_min: f64, f: impl Fn(&Quadrature) -> f64) -> Result<f64> {
    q.validate()?;
    let mut cfg = *q;
    let mut prev = f(&Quadrature::for_exponent(&cfg, gamma_min));
    let mut change = f64::INFINITY;
    for _ in 0..MAX_REFINEMENTS {
        cfg = cfg.refined();
        let next = f(&Quadrature::for_exponent(&cfg, gamma_min));
        change = (next - prev).abs();
        if change <= q.abs_tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::QuadratureNotConverged {
        abs_tol: q.abs_tol,
        change,
    })
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    u0: f64,
    u1: f64,
    v0: f64,
    v1: f64,
}

/// `J` of one component on one rectangle.
fn rect_integral(comp: &Component, theta: f64, r: Rect, quad: &Quadrature) -> f64 {
    let Rect { u0, u1, v0, v1 } = r;
    let eu = (-theta * (u1 - u0)).exp();
    let ev = (-theta * (v1 - v0)).exp();
    let phi = |u: f64, v: f64| comp.eval(u, v);
    let corners = phi(u1, v1) - ev * phi(u1, v0) - eu * phi(u0, v1) + eu * ev * phi(u0, v0);

    let (sing_u, sing_v): (Vec<f64>, Vec<f64>) = match comp {
        Component::Stationary { .. } => (vec![v0, v1], vec![u0, u1]),
        Component::Sum { .. } => (vec![-v0, -v1], vec![-u0, -u1]),
        Component::Bif { .. } => (vec![0.0], vec![0.0]),
    };
    let edge_u = quad.integrate(u0, u1, &[], &sing_u, |u| {
        (-theta * (u1 - u)).exp() * (phi(u, v1) - ev * phi(u, v0))
    });
    let edge_v = quad.integrate(v0, v1, &[], &sing_v, |v| {
        (-theta * (v1 - v)).exp() * (phi(u1, v) - eu * phi(u0, v))
    });

    let double = match *comp {
        Component::Stationary { c, gamma } => {
            let f = |w: f64| {
                let zmax = (2.0 * u1 - w).min(2.0 * v1 + w);
                let zmin = (2.0 * u0 - w).max(2.0 * v0 + w);
                if zmax <= zmin {
                    return 0.0;
                }
                let top = (theta * (zmax - u1 - v1)).exp();
                pow(w, gamma) * top * -(theta * (zmin - zmax)).exp_m1()
            };
            let integral = quad.integrate(u0 - v1, u1 - v0, &[u0 - v0, u1 - v1], &[0.0], f);
            0.5 * theta * c * integral
        }
        Component::Sum { c, gamma } => {
            let f = |z: f64| {
                let hi = (2.0 * u1 - z).min(z - 2.0 * v0);
                let lo = (2.0 * u0 - z).max(z - 2.0 * v1);
                let len = (hi - lo).max(0.0);
                pow(z, gamma) * (theta * (z - u1 - v1)).exp() * len
            };
            let integral = quad.integrate(u0 + v0, u1 + v1, &[u0 + v1, u1 + v0], &[0.0], f);
            0.5 * theta * theta * c * integral
        }
        Component::Bif { c, two_h, k } => {
            let ru = weighted_rule(quad, theta, u0, u1);
            let rv = weighted_rule(quad, theta, v0, v1);
            let pu: Vec<f64> = ru.x.iter().map(|&u| pow(u, two_h)).collect();
            let pv: Vec<f64> = rv.x.iter().map(|&v| pow(v, two_h)).collect();
            let mut total = 0.0;
            for (a, wa) in pu.iter().zip(&ru.w) {
                let mut row = 0.0;
                for (b, wb) in pv.iter().zip(&rv.w) {
                    row += wb * pow(a + b, k);
                }
                total += wa * row;
            }
            theta * theta * c * total
        }
    };

    corners - theta * (edge_u + edge_v) + double
}

/// Rule on `[a, b]` graded toward the origin, with weights premultiplied by
/// `e^{-θ(b-x)}`.
fn weighted_rule(quad: &Quadrature, theta: f64, a: f64, b: f64) -> Rule {
    let mut r = quad.rule(a, b, &[], &[0.0]);
    for (x, w) in r.x.iter().zip(r.w.iter_mut()) {
        *w *= (-theta * (b - x)).exp();
    }
    r
}

fn smallest_exponent(spec: &KernelSpec) -> f64 {
    spec.components()
        .iter()
        .map(|c| match *c {
            Component::Stationary { gamma, .. } | Component::Sum { gamma, .. } => gamma,
            Component::Bif { two_h, k, .. } => two_h.min(two_h * k),
        })
        .fold(f64::INFINITY, f64::min)
}

fn pair_once(spec: &OUSpec, s: f64, t: f64, quad: &Quadrature) -> f64 {
    let l = horizon(spec.theta, s + t);
    let r = Rect {
        u0: (s - l).max(0.0),
        u1: s,
        v0: (t - l).max(0.0),
        v1: t,
    };
    spec.kernel
        .components()
        .iter()
        .map(|c| rect_integral(c, spec.theta, r, quad))
        .sum()
}

/// `E[X_s X_t]`, refined until doubling the panel density changes it by at
/// most `q.abs_tol`.
pub fn ou_cov_pair(spec: &OUSpec, s: f64, t: f64, q: &QuadConfig) -> Result<f64> {
    check_range("s", s, s >= 0.0, "s >= 0")?;
    check_range("t", t, t >= 0.0, "t >= 0")?;
    let (s, t) = if s <= t { (s, t) } else { (t, s) };
    if s == 0.0 {
        return Ok(0.0);
    }
    refine(q, smallest_exponent(&spec.kernel), |quad| {
        pair_once(spec, s, t, quad)
    })
}

/// Covariance matrix of `(X_{t_1}, …, X_{t_n})`.
///
/// On a uniform grid `{Δ, 2Δ, …, nΔ}` the rectangle `[0, aΔ] × [0, bΔ]` is
/// tiled by grid cells; stationary cells depend only on `a - b` and sum cells
/// only on `a + b`, so each distinct cell is integrated once and the matrix
/// is assembled by a two-pass exponential recursion. Other grids fall back to
/// entrywise [`ou_cov_pair`].
pub fn ou_gram(spec: &OUSpec, grid: &TimeGrid, q: &QuadConfig) -> Result<CovMatrix> {
    q.validate()?;
    let m = match grid.uniform_step() {
        Some(step) => uniform_gram(spec, grid.len(), step, q)?,
        None => {
            let p = grid.points();
            let n = p.len();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
            let vals = pairs
                .par_iter()
                .map(|&(i, j)| ou_cov_pair(spec, p[j], p[i], q))
                .collect::<Result<Vec<f64>>>()?;
            let mut m = nalgebra::DMatrix::zeros(n, n);
            for (&(i, j), v) in pairs.iter().zip(vals) {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            CovMatrix::new(m)?
        }
    };
    m.check_psd()?;
    Ok(m)
}

fn uniform_gram(spec: &OUSpec, n: usize, step: f64, q: &QuadConfig) -> Result<CovMatrix> {
    let theta = spec.theta;
    let quad = Quadrature::for_exponent(q, smallest_exponent(&spec.kernel));
    let cell = |a: usize, b: usize| Rect {
        u0: (a - 1) as f64 * step,
        u1: a as f64 * step,
        v0: (b - 1) as f64 * step,
        v1: b as f64 * step,
    };

    // xi[(a-1) + n (b-1)] = J over cell (a, b), 1-based cell indices.
    let mut xi = vec![0.0; n * n];
    for comp in spec.kernel.components() {
        match comp {
            Component::Stationary { .. } => {
                // lag d = a - b in -(n-1)..=(n-1)
                let by_lag: Vec<f64> = (0..2 * n - 1)
                    .into_par_iter()
                    .map(|idx| {
                        let d = idx as isize - (n as isize - 1);
                        let (a, b) = if d >= 0 {
                            (1 + d as usize, 1)
                        } else {
                            (1, 1 + (-d) as usize)
                        };
                        rect_integral(&comp, theta, cell(a, b), &quad)
                    })
                    .collect();
                for b in 1..=n {
                    for a in 1..=n {
                        xi[(a - 1) + n * (b - 1)] += by_lag[a + n - 1 - b];
                    }
                }
            }
            Component::Sum { .. } => {
                // a + b in 2..=2n
                let by_sum: Vec<f64> = (2..=2 * n)
                    .into_par_iter()
                    .map(|sum| {
                        let a = sum.div_ceil(2);
                        rect_integral(&comp, theta, cell(a, sum - a), &quad)
                    })
                    .collect();
                for b in 1..=n {
                    for a in 1..=n {
                        xi[(a - 1) + n * (b - 1)] += by_sum[a + b - 2];
                    }
                }
            }
            Component::Bif { .. } => {
                let cols: Vec<Vec<f64>> = (1..=n)
                    .into_par_iter()
                    .map(|b| {
                        (b..=n)
                            .map(|a| rect_integral(&comp, theta, cell(a, b), &quad))
                            .collect()
                    })
                    .collect();
                for (bi, col) in cols.iter().enumerate() {
                    let b = bi + 1;
                    for (off, v) in col.iter().enumerate() {
                        let a = b + off;
                        xi[(a - 1) + n * (b - 1)] += v;
                        if a != b {
                            xi[(b - 1) + n * (a - 1)] += v;
                        }
                    }
                }
            }
        }
    }

    // M[a][b] = Σ_{i<=a, k<=b} e^{-θΔ(a-i)} e^{-θΔ(b-k)} xi[i][k]
    let decay = (-theta * step).exp();
    for b in 0..n {
        for a in 1..n {
            xi[a + n * b] += decay * xi[(a - 1) + n * b];
        }
    }
    for b in 1..n {
        for a in 0..n {
            xi[a + n * b] += decay * xi[a + n * (b - 1)];
        }
    }
    let m = nalgebra::DMatrix::from_vec(n, n, xi);
    let sym = (&m + m.transpose()) * 0.5;
    CovMatrix::new(sym)
}

/// `ρ_α(t) = E[Z_t Z_0]` for the stationary OU process driven by fBm of
/// index `alpha`, at a real lag `t >= 0`.
///
/// Uses the time-domain form
/// `ρ_α(t) = (α/2) ∫_0^∞ e^{-θs} [(s+t)^γ + sgn(s-t)|s-t|^γ] ds`, `γ = 2α-1`,
/// split at `s = t` so that the only singularities sit at the origin of each
/// piece.
pub fn fou_acf(alpha: f64, theta: f64, t: f64, q: &QuadConfig) -> Result<f64> {
    check_range("alpha", alpha, alpha > 0.0 && alpha < 1.0, "0 < alpha < 1")?;
    check_range("theta", theta, theta > 0.0, "theta > 0")?;
    check_range("lag", t, t >= 0.0, "lag >= 0")?;
    let g = 2.0 * alpha - 1.0;
    refine(q, g, |quad| alpha * 0.5 * acf_pieces(g, theta, t, quad))
}

fn acf_pieces(g: f64, theta: f64, t: f64, quad: &Quadrature) -> f64 {
    let l = horizon(theta, t);
    // ∫_0^t e^{-θs}[(t+s)^γ - (t-s)^γ] ds in r = t - s
    let near = quad.integrate((t - l).max(0.0), t, &[], &[0.0], |r| {
        (-theta * (t - r)).exp() * (pow(2.0 * t - r, g) - pow(r, g))
    });
    // ∫_t^∞ e^{-θs}[(s+t)^γ + (s-t)^γ] ds in x = s - t
    let far = quad.integrate(0.0, l, &[], &[0.0], |x| {
        (-theta * x).exp() * (pow(x + 2.0 * t, g) + pow(x, g))
    });
    near + (-theta * t).exp() * far
}

/// [`fou_acf`] at an integer lag.
pub fn stationary_fou_acf(alpha: f64, theta: f64, lag: u64, q: &QuadConfig) -> Result<f64> {
    fou_acf(alpha, theta, lag as f64, q)
}

/// Large-lag expansion `α Σ_{m odd} γ(γ-1)…(γ-m+1) θ^{-m-1} t^{γ-m}`,
/// truncated after `terms` terms. Returns the sum and the magnitude of the
/// last term kept.
pub fn fou_acf_asymptotic(alpha: f64, theta: f64, t: f64, terms: usize) -> (f64, f64) {
    let g = 2.0 * alpha - 1.0;
    let mut falling = 1.0;
    let mut sum = 0.0;
    let mut last = 0.0;
    let mut kept = 0;
    for m in 1.. {
        falling *= g - (m - 1) as f64;
        if m % 2 == 1 {
            last = alpha * falling * theta.powi(-m - 1) * t.powf(g - m as f64);
            sum += last;
            kept += 1;
            if kept == terms {
                break;
            }
        }
    }
    (sum, last.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::make_kernel;
    use approx::assert_abs_diff_eq;

    fn ou(family: KernelFamily, h: f64, k: Option<f64>, theta: f64) -> OUSpec {
        OUSpec::new(make_kernel(family, h, k).unwrap(), theta).unwrap()
    }

    fn std_ou(s: f64, t: f64, theta: f64) -> f64 {
        let (s, t) = (s.min(t), s.max(t));
        (-theta * (t - s)).exp() * (1.0 - (-2.0 * theta * s).exp()) / (2.0 * theta)
    }

    #[test]
    fn brownian_driver_matches_standard_ou() {
        let q = QuadConfig::default();
        let spec = ou(KernelFamily::Sfbm, 0.5, None, 1.0);
        assert_abs_diff_eq!(
            ou_cov_pair(&spec, 2.0, 2.0, &q).unwrap(),
            (1.0 - (-4f64).exp()) / 2.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            ou_cov_pair(&spec, 1.0, 3.0, &q).unwrap(),
            0.058510,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            ou_cov_pair(&spec, 1.0, 3.0, &q).unwrap(),
            std_ou(1.0, 3.0, 1.0),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            ou_cov_pair(&spec, 3.0, 1.0, &q).unwrap(),
            std_ou(1.0, 3.0, 1.0),
            epsilon = 1e-9
        );
        assert_eq!(ou_cov_pair(&spec, 0.0, 4.0, &q).unwrap(), 0.0);

        let g = ou_gram(&spec, &TimeGrid::integers(2), &q).unwrap();
        assert_abs_diff_eq!(g.get(0, 0), 0.432332, epsilon = 1e-6);
        assert_abs_diff_eq!(g.get(0, 1), 0.159046, epsilon = 1e-6);
        assert_abs_diff_eq!(g.get(1, 1), 0.490842, epsilon = 1e-6);
    }

    #[test]
    fn uniform_gram_matches_pairwise() {
        let q = QuadConfig::default();
        for spec in [
            ou(KernelFamily::Sfbm, 0.7, None, 1.0),
            ou(KernelFamily::Fbm, 0.3, None, 2.0),
            ou(KernelFamily::Bifbm, 0.6, Some(0.8), 0.5),
        ] {
            let g = ou_gram(&spec, &TimeGrid::integers(12), &q).unwrap();
            for (i, j) in [(0, 0), (3, 7), (11, 11), (11, 0), (5, 6)] {
                let direct = ou_cov_pair(&spec, (i + 1) as f64, (j + 1) as f64, &q).unwrap();
                assert_abs_diff_eq!(g.get(i, j), direct, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn non_uniform_grid_uses_pairs() {
        let q = QuadConfig::default();
        let spec = ou(KernelFamily::Sfbm, 0.5, None, 1.5);
        let grid = TimeGrid::new(vec![0.3, 1.0, 2.7]).unwrap();
        let g = ou_gram(&spec, &grid, &q).unwrap();
        for (i, s) in grid.points().iter().enumerate() {
            for (j, t) in grid.points().iter().enumerate() {
                assert_abs_diff_eq!(g.get(i, j), std_ou(*s, *t, 1.5), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn limit_variance_values() {
        assert_abs_diff_eq!(
            limit_variance(&ou(KernelFamily::Sfbm, 0.5, None, 2.0)),
            0.25,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            limit_variance(&ou(KernelFamily::Sfbm, 0.75, None, 1.0)),
            0.75 * gamma(1.5),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            limit_variance(&ou(KernelFamily::Bifbm, 0.6, Some(1.0), 1.3)),
            limit_variance(&ou(KernelFamily::Fbm, 0.6, None, 1.3)),
            epsilon = 1e-15
        );
    }

    #[test]
    fn acf_closed_forms() {
        let q = QuadConfig::default();
        assert_abs_diff_eq!(
            stationary_fou_acf(0.5, 1.0, 2, &q).unwrap(),
            (-2f64).exp() / 2.0,
            epsilon = 1e-10
        );
        for (a, th) in [(0.3, 1.0f64), (0.6, 0.5), (0.9, 2.0), (0.1, 1.0)] {
            let f0 = a * gamma(2.0 * a) / th.powf(2.0 * a);
            assert_abs_diff_eq!(stationary_fou_acf(a, th, 0, &q).unwrap(), f0, epsilon = 1e-9);
        }
    }

    #[test]
    fn acf_approaches_asymptotic_expansion() {
        let q = QuadConfig::default();
        for (a, th) in [(0.7, 1.0), (0.3, 2.0), (0.6, 0.5)] {
            let t = 200.0;
            let exact = fou_acf(a, th, t, &q).unwrap();
            let (approx, last) = fou_acf_asymptotic(a, th, t, 4);
            assert!(
                (exact - approx).abs() <= 1e-9 * exact.abs() + 10.0 * last,
                "{a} {th}"
            );
        }
    }

    #[test]
    fn panel_doubling_is_within_tolerance() {
        let q = QuadConfig::default();
        let spec = ou(KernelFamily::Bifbm, 0.7, Some(0.6), 1.0);
        let quad = Quadrature::for_exponent(&q, smallest_exponent(&spec.kernel));
        let fine = Quadrature::for_exponent(&q.refined(), smallest_exponent(&spec.kernel));
        for (s, t) in [(0.5, 0.5), (3.0, 7.5), (20.0, 21.0)] {
            let a = pair_once(&spec, s, t, &quad);
            let b = pair_once(&spec, s, t, &fine);
            assert!((a - b).abs() <= q.abs_tol, "{s} {t}: {a} vs {b}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = QuadConfig::default();
        let spec = ou(KernelFamily::Sfbm, 0.5, None, 1.0);
        assert!(ou_cov_pair(&spec, -1.0, 1.0, &q).is_err());
        assert!(OUSpec::new(spec.kernel, 0.0).is_err());
        assert!(stationary_fou_acf(1.0, 1.0, 0, &q).is_err());
        let bad = QuadConfig { abs_tol: 0.0, ..q };
        assert!(ou_cov_pair(&spec, 1.0, 1.0, &bad).is_err());
    }
}

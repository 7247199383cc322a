//! Composite Gauss–Legendre rules.
//!
//! Integrands in this crate are smooth except at a handful of known points
//! (the diagonal `u = v` of a covariance kernel, the time origin). A
//! [`Quadrature`] builds a composite rule that places panel boundaries at
//! those points and refines geometrically toward them, so each panel sees an
//! analytic integrand.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};

/// Default number of geometric refinement levels toward a singular point.
/// The innermost panel has width `2^-levels` times the near-zone width, which
/// is ample for integrands that stay bounded there.
pub const DEFAULT_GRADING_LEVELS: usize = 40;

/// Quadrature control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Panels per unit length on smooth stretches.
    pub panels_per_unit: usize,
    /// Gauss–Legendre nodes per panel.
    pub nodes_per_panel: usize,
    /// Absolute error target, checked by panel doubling.
    pub abs_tol: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            panels_per_unit: 1,
            nodes_per_panel: 16,
            abs_tol: 1e-9,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        check_range(
            "panels_per_unit",
            self.panels_per_unit as f64,
            self.panels_per_unit > 0,
            "positive integer",
        )?;
        check_range(
            "nodes_per_panel",
            self.nodes_per_panel as f64,
            self.nodes_per_panel > 0,
            "positive integer",
        )?;
        check_range("abs_tol", self.abs_tol, self.abs_tol > 0.0, "> 0")
    }

    /// Same configuration with twice as many panels per unit length.
    pub fn refined(&self) -> QuadConfig {
        QuadConfig {
            panels_per_unit: self.panels_per_unit * 2,
            ..*self
        }
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, found by Newton iteration from the
    /// Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends the rule mapped onto `[a, b]`.
    fn push_panel(&self, a: f64, b: f64, rule: &mut Rule) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            rule.x.push(mid + half * x);
            rule.w.push(half * w);
        }
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// A concrete list of nodes and weights.
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl Rule {
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Composite rule builder.
#[derive(Debug, Clone)]
pub struct Quadrature {
    gl: GaussLegendre,
    panels_per_unit: usize,
    levels: usize,
}

impl Quadrature {
    pub fn new(cfg: &QuadConfig) -> Self {
        Quadrature {
            gl: GaussLegendre::new(cfg.nodes_per_panel),
            panels_per_unit: cfg.panels_per_unit,
            levels: DEFAULT_GRADING_LEVELS,
        }
    }

    /// Grading deep enough that an `x^gamma` endpoint singularity leaves an
    /// innermost-panel contribution below roughly `1e-14`.
    pub fn for_exponent(cfg: &QuadConfig, gamma: f64) -> Self {
        let mut q = Quadrature::new(cfg);
        if gamma < 0.0 {
            let levels = (46.5 / (1.0 + gamma)).ceil();
            q.levels = (levels as usize).clamp(DEFAULT_GRADING_LEVELS, 2000);
        }
        q
    }

    /// Builds a rule on `[a, b]`. `breaks` are points where the integrand is
    /// only piecewise smooth (panel boundaries are placed there); `singular`
    /// are points where derivatives blow up (panels are additionally graded
    /// toward them). Points outside `[a, b]` are ignored.
    pub fn rule(&self, a: f64, b: f64, breaks: &[f64], singular: &[f64]) -> Rule {
        let mut rule = Rule::default();
        self.extend_rule(a, b, breaks, singular, &mut rule);
        rule
    }

    pub fn extend_rule(&self, a: f64, b: f64, breaks: &[f64], singular: &[f64], rule: &mut Rule) {
        if !(b > a) {
            return;
        }
        let scale = 1e-13 * a.abs().max(b.abs()).max(1.0);
        let mut cuts = vec![a, b];
        for &p in breaks.iter().chain(singular) {
            if p > a + scale && p < b - scale {
                cuts.push(p);
            }
        }
        cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        cuts.dedup_by(|x, y| (*x - *y).abs() <= scale);
        let is_singular = |p: f64| singular.iter().any(|&s| (s - p).abs() <= scale);
        for pair in cuts.windows(2) {
            let (p, q) = (pair[0], pair[1]);
            match (is_singular(p), is_singular(q)) {
                (false, false) => self.uniform(p, q, rule),
                (true, false) => self.graded(p, q, rule),
                (false, true) => self.graded(q, p, rule),
                (true, true) => {
                    let m = 0.5 * (p + q);
                    self.graded(p, m, rule);
                    self.graded(q, m, rule);
                }
            }
        }
    }

    pub fn integrate(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        singular: &[f64],
        f: impl FnMut(f64) -> f64,
    ) -> f64 {
        self.rule(a, b, breaks, singular).integrate(f)
    }

    fn uniform(&self, p: f64, q: f64, rule: &mut Rule) {
        let panels = (((q - p) * self.panels_per_unit as f64).ceil() as usize).max(1);
        let h = (q - p) / panels as f64;
        for i in 0..panels {
            let lo = p + h * i as f64;
            let hi = if i + 1 == panels { q } else { lo + h };
            self.gl.push_panel(lo, hi, rule);
        }
    }

    /// Panels graded toward `s`; `other` may lie on either side of `s`.
    fn graded(&self, s: f64, other: f64, rule: &mut Rule) {
        let len = (other - s).abs();
        let dir = (other - s).signum();
        let near = len.min(1.0 / self.panels_per_unit as f64);
        if len > near {
            let (lo, hi) = order(s + dir * near, other);
            self.uniform(lo, hi, rule);
        }
        let mut outer = near;
        for _ in 0..self.levels {
            let inner = 0.5 * outer;
            let (lo, hi) = order(s + dir * inner, s + dir * outer);
            self.gl.push_panel(lo, hi, rule);
            outer = inner;
        }
        let (lo, hi) = order(s, s + dir * outer);
        self.gl.push_panel(lo, hi, rule);
    }
}

fn order(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 16] {
            let gl = GaussLegendre::new(n);
            let wsum: f64 = gl.weights.iter().sum();
            assert_relative_eq!(wsum, 2.0, epsilon = 1e-14);
            // degree 2n-1 monomial integrates exactly
            let deg = 2 * n - 2;
            let got: f64 = gl
                .nodes
                .iter()
                .zip(&gl.weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            assert_relative_eq!(got, 2.0 / (deg as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn graded_rule_handles_endpoint_power_singularity() {
        let q = Quadrature::new(&QuadConfig::default());
        for gamma in [0.1, 0.5, 1.4] {
            let got = q.integrate(0.0, 3.0, &[], &[0.0], |x| x.powf(gamma));
            let exact = 3f64.powf(gamma + 1.0) / (gamma + 1.0);
            assert_relative_eq!(got, exact, max_relative = 1e-13);
        }
        let q = Quadrature::for_exponent(&QuadConfig::default(), -0.7);
        let got = q.integrate(0.0, 1.0, &[], &[0.0], |x| x.powf(-0.7));
        assert_relative_eq!(got, 1.0 / 0.3, max_relative = 1e-12);
    }

    #[test]
    fn interior_kink_is_split_and_graded() {
        let q = Quadrature::new(&QuadConfig::default());
        let got = q.integrate(-1.0, 2.0, &[], &[0.0], |x| x.abs().powf(0.3));
        let exact = (1.0 + 2f64.powf(1.3)) / 1.3;
        assert_relative_eq!(got, exact, max_relative = 1e-13);
    }

    #[test]
    fn empty_or_reversed_interval_gives_empty_rule() {
        let q = Quadrature::new(&QuadConfig::default());
        assert!(q.rule(1.0, 1.0, &[], &[]).is_empty());
        assert!(q.rule(2.0, 1.0, &[], &[]).is_empty());
    }
}

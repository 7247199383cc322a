//! Covariance kernels of the driving processes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::covmatrix::CovMatrix;
use crate::error::{check_range, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// Fractional Brownian motion.
    Fbm,
    /// Sub-fractional Brownian motion.
    Sfbm,
    /// Bifractional Brownian motion.
    Bifbm,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Fbm => "fbm",
            KernelFamily::Sfbm => "sfbm",
            KernelFamily::Bifbm => "bifbm",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fbm" => Ok(KernelFamily::Fbm),
            "sfbm" => Ok(KernelFamily::Sfbm),
            "bifbm" => Ok(KernelFamily::Bifbm),
            other => Err(format!(
                "unknown kernel family '{other}' (expected fbm, sfbm or bifbm)"
            )),
        }
    }
}

/// A validated driving kernel. `k` is 1 for every family except bifBm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub hurst: f64,
    pub k: f64,
}

/// One non-separable piece of a kernel, `R(u, v) = separable + Σ pieces`.
///
/// Pieces of the form `f(u) + g(v)` have vanishing rectangular increments and
/// drop out of every Stieltjes integral against `R`, so they are not listed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Component {
    /// `c |u - v|^gamma`
    Stationary { c: f64, gamma: f64 },
    /// `c (u + v)^gamma`
    Sum { c: f64, gamma: f64 },
    /// `c (u^two_h + v^two_h)^k`
    Bif { c: f64, two_h: f64, k: f64 },
}

impl Component {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        match *self {
            Component::Stationary { c, gamma } => c * pow(u - v, gamma),
            Component::Sum { c, gamma } => c * pow(u + v, gamma),
            Component::Bif { c, two_h, k } => c * pow(pow(u, two_h) + pow(v, two_h), k),
        }
    }
}

/// `|x|^p` with `0^p = 0` for `p > 0` and no detour through `log 0`.
#[inline]
pub(crate) fn pow(x: f64, p: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        0.0
    } else if p == 1.0 {
        a
    } else {
        (p * a.ln()).exp()
    }
}

/// Validates kernel parameters. `k` may only be given for bifBm.
pub fn make_kernel(family: KernelFamily, hurst: f64, k: Option<f64>) -> Result<KernelSpec> {
    check_range("hurst", hurst, hurst > 0.0 && hurst < 1.0, "0 < H < 1")?;
    let k = match (family, k) {
        (KernelFamily::Bifbm, Some(k)) => {
            check_range("k", k, k > 0.0 && k <= 1.0, "0 < K <= 1")?;
            k
        }
        (KernelFamily::Bifbm, None) => 1.0,
        (_, Some(_)) => return Err(Error::ParamUnsupported("k")),
        (_, None) => 1.0,
    };
    Ok(KernelSpec { family, hurst, k })
}

impl KernelSpec {
    /// Effective self-similarity index: `H` for fBm and sfBm, `HK` for bifBm.
    pub fn memory_index(&self) -> f64 {
        self.hurst * self.k
    }

    pub fn cov(&self, s: f64, t: f64) -> f64 {
        if s == 0.0 || t == 0.0 {
            return 0.0;
        }
        let two_h = 2.0 * self.hurst;
        match self.family {
            KernelFamily::Fbm => 0.5 * (pow(t, two_h) + pow(s, two_h) - pow(t - s, two_h)),
            KernelFamily::Sfbm => {
                pow(t, two_h) + pow(s, two_h) - 0.5 * (pow(t + s, two_h) + pow(t - s, two_h))
            }
            KernelFamily::Bifbm => {
                let k = self.k;
                (0.5f64).powf(k) * (pow(pow(t, two_h) + pow(s, two_h), k) - pow(t - s, two_h * k))
            }
        }
    }

    /// Non-separable pieces of the kernel.
    pub fn components(&self) -> Vec<Component> {
        let two_h = 2.0 * self.hurst;
        match self.family {
            KernelFamily::Fbm => vec![Component::Stationary {
                c: -0.5,
                gamma: two_h,
            }],
            KernelFamily::Sfbm => {
                let mut out = vec![Component::Stationary {
                    c: -0.5,
                    gamma: two_h,
                }];
                // (u + v)^1 is separable
                if two_h != 1.0 {
                    out.push(Component::Sum {
                        c: -0.5,
                        gamma: two_h,
                    });
                }
                out
            }
            KernelFamily::Bifbm => {
                let c = (0.5f64).powf(self.k);
                let mut out = vec![Component::Stationary {
                    c: -c,
                    gamma: two_h * self.k,
                }];
                // (u^2H + v^2H)^1 is separable
                if self.k != 1.0 {
                    out.push(Component::Bif { c, two_h, k: self.k });
                }
                out
            }
        }
    }
}

/// `R(s, t) = E[G_s G_t]`.
pub fn cov(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    spec.cov(s, t)
}

/// Strictly increasing nonnegative observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("grid is empty".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidGrid(format!("time {p} is negative or not finite")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(TimeGrid { points })
    }

    /// `{1, 2, …, n}`.
    pub fn integers(n: usize) -> Self {
        TimeGrid {
            points: (1..=n).map(|i| i as f64).collect(),
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `Some(Δ)` when the grid is exactly `{Δ, 2Δ, …, nΔ}`.
    pub fn uniform_step(&self) -> Option<f64> {
        let step = self.points[0];
        if step <= 0.0 {
            return None;
        }
        let uniform = self
            .points
            .iter()
            .enumerate()
            .all(|(i, &p)| (p - step * (i + 1) as f64).abs() <= 1e-12 * p.max(1.0));
        uniform.then_some(step)
    }
}

/// Gram matrix of the driver on `grid`.
pub fn gram(spec: &KernelSpec, grid: &TimeGrid) -> Result<CovMatrix> {
    let p = grid.points();
    let m = CovMatrix::from_fn(p.len(), |i, j| spec.cov(p[i], p[j]))?;
    m.check_psd()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sfbm(h: f64) -> KernelSpec {
        make_kernel(KernelFamily::Sfbm, h, None).unwrap()
    }

    #[test]
    fn validation() {
        let k = make_kernel(KernelFamily::Sfbm, 0.6, None).unwrap();
        assert_eq!(k.k, 1.0);
        assert!(matches!(
            make_kernel(KernelFamily::Bifbm, 0.5, Some(1.2)),
            Err(Error::ParamOutOfRange { name: "k", .. })
        ));
        assert!(matches!(
            make_kernel(KernelFamily::Fbm, 1.0, None),
            Err(Error::ParamOutOfRange { name: "hurst", .. })
        ));
        assert!(matches!(
            make_kernel(KernelFamily::Sfbm, 0.6, Some(0.5)),
            Err(Error::ParamUnsupported("k"))
        ));
        assert!(make_kernel(KernelFamily::Fbm, f64::NAN, None).is_err());
    }

    #[test]
    fn family_parsing_round_trips() {
        for f in [KernelFamily::Fbm, KernelFamily::Sfbm, KernelFamily::Bifbm] {
            assert_eq!(f.to_string().parse::<KernelFamily>().unwrap(), f);
        }
        assert!("gbm".parse::<KernelFamily>().is_err());
    }

    #[test]
    fn known_values() {
        assert_eq!(cov(&sfbm(0.5), 1.0, 2.0), 1.0);
        assert_relative_eq!(cov(&sfbm(0.75), 1.0, 1.0), 2.0 - 2f64.sqrt(), epsilon = 1e-15);
        let b = make_kernel(KernelFamily::Bifbm, 0.7, Some(1.0)).unwrap();
        let (s, t) = (1.3f64, 2.9f64);
        let direct = 0.5 * (t.powf(1.4) + s.powf(1.4) - (t - s).powf(1.4));
        assert_relative_eq!(cov(&b, s, t), direct, epsilon = 1e-14);
    }

    #[test]
    fn gram_small_cases() {
        let g = gram(&sfbm(0.5), &TimeGrid::new(vec![1.0, 2.0]).unwrap()).unwrap();
        assert_eq!(g.matrix().as_slice(), &[1.0, 1.0, 1.0, 2.0]);

        let spec = make_kernel(KernelFamily::Bifbm, 0.6, Some(0.8)).unwrap();
        let g = gram(&spec, &TimeGrid::new(vec![2.5]).unwrap()).unwrap();
        assert_eq!(g.get(0, 0), cov(&spec, 2.5, 2.5));

        let grid = TimeGrid::integers(3);
        let g = gram(&spec, &grid).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (s, t) = ((i + 1) as f64, (j + 1) as f64);
                assert_eq!(g.get(i, j), cov(&spec, s, t));
            }
        }
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![1.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![-1.0, 1.0]).is_err());
        assert_eq!(TimeGrid::integers(4).uniform_step(), Some(1.0));
        assert_eq!(
            TimeGrid::new(vec![0.5, 1.0, 1.5]).unwrap().uniform_step(),
            Some(0.5)
        );
        assert_eq!(TimeGrid::new(vec![1.0, 3.0]).unwrap().uniform_step(), None);
    }

    #[test]
    fn components_reproduce_mixed_increments() {
        // Rectangular increments of R must match those of the component sum.
        let specs = [
            make_kernel(KernelFamily::Fbm, 0.3, None).unwrap(),
            sfbm(0.7),
            sfbm(0.5),
            make_kernel(KernelFamily::Bifbm, 0.6, Some(0.8)).unwrap(),
            make_kernel(KernelFamily::Bifbm, 0.6, Some(1.0)).unwrap(),
        ];
        let (u0, u1, v0, v1) = (0.4, 1.7, 0.9, 3.2);
        for spec in specs {
            let inc = |f: &dyn Fn(f64, f64) -> f64| f(u1, v1) - f(u1, v0) - f(u0, v1) + f(u0, v0);
            let direct = inc(&|u, v| spec.cov(u, v));
            let comps = spec.components();
            let pieces = inc(&|u, v| comps.iter().map(|c| c.eval(u, v)).sum());
            assert_relative_eq!(direct, pieces, epsilon = 1e-13);
        }
    }

    fn any_spec() -> impl Strategy<Value = KernelSpec> {
        (0usize..3, 0.01f64..0.99, 0.05f64..=1.0).prop_map(|(f, h, k)| match f {
            0 => make_kernel(KernelFamily::Fbm, h, None).unwrap(),
            1 => make_kernel(KernelFamily::Sfbm, h, None).unwrap(),
            _ => make_kernel(KernelFamily::Bifbm, h, Some(k)).unwrap(),
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_zero_at_origin(spec in any_spec(), s in 0.0f64..50.0, t in 0.0f64..50.0) {
            prop_assert_eq!(spec.cov(s, t), spec.cov(t, s));
            prop_assert_eq!(spec.cov(0.0, t), 0.0);
        }

        #[test]
        fn bifbm_unit_k_is_fbm(h in 0.01f64..0.99, s in 0.0f64..100.0, t in 0.0f64..100.0) {
            let b = make_kernel(KernelFamily::Bifbm, h, Some(1.0)).unwrap();
            let f = make_kernel(KernelFamily::Fbm, h, None).unwrap();
            prop_assert!((b.cov(s, t) - f.cov(s, t)).abs() <= 1e-12 * (1.0 + f.cov(t, t).abs()));
        }

        // (2 - 2^{2H-1})|t-s|^{2H} and |t-s|^{2H} sandwich the increment
        // variance; which one is the upper bound depends on the side of 1/2.
        #[test]
        fn sfbm_increment_bound(h in 0.01f64..0.99, s in 0.0f64..20.0, t in 0.0f64..20.0) {
            let k = sfbm(h);
            let inc = k.cov(t, t) + k.cov(s, s) - 2.0 * k.cov(s, t);
            let d = (t - s).abs().powf(2.0 * h);
            let c = 2.0 - 2f64.powf(2.0 * h - 1.0);
            let slack = 1e-12 * (1.0 + t.max(s).powf(2.0 * h));
            prop_assert!(inc <= c.max(1.0) * d + slack);
            prop_assert!(inc >= c.min(1.0) * d - slack);
        }

        #[test]
        fn bifbm_increment_bound(h in 0.01f64..0.99, kk in 0.05f64..=1.0, s in 0.0f64..20.0, t in 0.0f64..20.0) {
            let k = make_kernel(KernelFamily::Bifbm, h, Some(kk)).unwrap();
            let inc = k.cov(t, t) + k.cov(s, s) - 2.0 * k.cov(s, t);
            let bound = 2f64.powf(1.0 - kk) * (t - s).abs().powf(2.0 * h * kk);
            prop_assert!(inc <= bound + 1e-12 * (1.0 + t.max(s).powf(2.0 * h)));
        }

        #[test]
        fn gram_is_psd(spec in any_spec(), raw in prop::collection::vec(0.01f64..3.0, 1..64)) {
            let mut t = 0.0;
            let points: Vec<f64> = raw.iter().map(|d| { t += d; t }).collect();
            let g = gram(&spec, &TimeGrid::new(points).unwrap()).unwrap();
            let eig = nalgebra::SymmetricEigen::new(g.matrix().clone()).eigenvalues;
            prop_assert!(eig.min() >= -1e-9 * eig.max());
        }
    }
}

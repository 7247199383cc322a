//! Exact Gaussian sampling of the observed sequence, and an independent
//! path-integration oracle.
//!
//! Replication `r` always draws its normals from ChaCha8 stream `r` of the
//! generator seeded with `seed`, so output does not depend on how
//! replications are scheduled across threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmatrix::CovMatrix;
use crate::error::{Error, Result};
use crate::kernels::TimeGrid;
use crate::ou_covariance::OUSpec;

/// Names the random-number pipeline, recorded with every batch.
pub const GENERATOR_ID: &str = "chacha8-seed_from_u64-stream_per_replication/standard_normal";

/// Replications generated per matrix product.
const BLOCK: usize = 256;

/// Jitter levels tried in order, as multiples of the largest diagonal entry.
const JITTER_LEVELS: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Lower Cholesky factor of `cov + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: DMatrix<f64>,
    jitter: f64,
}

impl CholFactor {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// The diagonal shift that was needed, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn n(&self) -> usize {
        self.l.nrows()
    }
}

/// Factors `cov`, adding the smallest diagonal jitter that makes the
/// factorization succeed.
pub fn chol(cov: &CovMatrix) -> Result<CholFactor> {
    let d = cov.max_diagonal().max(0.0);
    let n = cov.n();
    for level in JITTER_LEVELS {
        let eps = level * d;
        let m = if eps == 0.0 {
            cov.matrix().clone()
        } else {
            cov.matrix() + DMatrix::identity(n, n) * eps
        };
        if let Some(c) = m.cholesky() {
            return Ok(CholFactor {
                l: c.unpack(),
                jitter: eps,
            });
        }
    }
    let eig = SymmetricEigen::new(cov.matrix().clone()).eigenvalues;
    Err(Error::NotPsd {
        min_eig: eig.min(),
        max_eig: eig.max(),
    })
}

/// `m` replications of an `n`-dimensional Gaussian vector, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub n: usize,
    pub m: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub generator_id: String,
}

impl SampleBatch {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n.max(1))
    }
}

fn stream(seed: u64, replication: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication as u64);
    rng
}

/// Standard normals of replication `replication`.
pub fn replication_normals(seed: u64, replication: usize, out: &mut [f64]) {
    let mut rng = stream(seed, replication);
    for z in out {
        *z = rng.sample(StandardNormal);
    }
}

/// Draws `m` replications `L z` and applies `f` to each, in replication
/// order, without keeping the samples.
pub fn sample_map<T, F>(factor: &CholFactor, m: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64]) -> T + Sync,
{
    let n = factor.n();
    let blocks = m.div_ceil(BLOCK);
    let per_block: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let width = BLOCK.min(m - start);
            let mut z = DMatrix::zeros(n, width);
            for (j, mut col) in z.column_iter_mut().enumerate() {
                replication_normals(seed, start + j, col.as_mut_slice());
            }
            let x = &factor.l * z;
            x.column_iter().map(|c| f(c.as_slice())).collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

/// `m` exact replications with covariance `cov`.
pub fn sample(cov: &CovMatrix, m: usize, seed: u64) -> Result<SampleBatch> {
    let factor = chol(cov)?;
    Ok(sample_with(&factor, m, seed))
}

pub fn sample_with(factor: &CholFactor, m: usize, seed: u64) -> SampleBatch {
    let rows = sample_map(factor, m, seed, |x| x.to_vec());
    SampleBatch {
        n: factor.n(),
        m,
        values: rows.concat(),
        seed,
        generator_id: GENERATOR_ID.to_string(),
    }
}

/// Fine grid of the path oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub fine_step: f64,
    /// Last observation time; observations are at `1, 2, …, horizon`.
    pub horizon: f64,
}

impl PathConfig {
    /// Number of fine steps per unit of time.
    pub fn steps_per_unit(&self) -> Result<usize> {
        let s = self.fine_step;
        if !(s > 0.0) || s > 0.1 {
            return Err(Error::FineGridTooCoarse(s));
        }
        let k = (1.0 / s).round();
        if ((1.0 / s) - k).abs() > 1e-9 * k {
            return Err(Error::FineGridTooCoarse(s));
        }
        Ok(k as usize)
    }

    pub fn observations(&self) -> Result<usize> {
        let h = self.horizon;
        if !(h >= 1.0) || h.fract() != 0.0 || !h.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "horizon must be a positive integer, got {h}"
            )));
        }
        Ok(h as usize)
    }
}

/// Left-point Euler recursion `X ← e^{-θδ}(X + ΔG)` over fine increments of
/// the driver, returning `X` at every `steps_per_obs`-th step.
pub fn ou_recursion(theta: f64, fine_step: f64, steps_per_obs: usize, increments: &[f64]) -> Vec<f64> {
    let decay = (-theta * fine_step).exp();
    let mut x = 0.0;
    let mut out = Vec::with_capacity(increments.len() / steps_per_obs.max(1));
    for (i, dg) in increments.iter().enumerate() {
        x = decay * (x + dg);
        if (i + 1) % steps_per_obs == 0 {
            out.push(x);
        }
    }
    out
}

/// Factor of the driver's Gram matrix on the fine grid of `cfg`.
pub fn path_factor(spec: &OUSpec, cfg: &PathConfig) -> Result<CholFactor> {
    let per_unit = cfg.steps_per_unit()?;
    let n = cfg.observations()?;
    let steps = per_unit * n;
    let step = 1.0 / per_unit as f64;
    let grid = TimeGrid::new((1..=steps).map(|i| i as f64 * step).collect())?;
    let p = grid.points();
    let g = CovMatrix::from_fn(steps, |i, j| spec.kernel.cov(p[i], p[j]))?;
    chol(&g)
}

/// `m` replications of `(X_1, …, X_n)` by simulating the driver on the fine
/// grid and integrating the OU equation pathwise.
pub fn path_oracle_batch(spec: &OUSpec, cfg: &PathConfig, m: usize, seed: u64) -> Result<SampleBatch> {
    let factor = path_factor(spec, cfg)?;
    let per_unit = cfg.steps_per_unit()?;
    let step = 1.0 / per_unit as f64;
    let rows = sample_map(&factor, m, seed, |g| {
        let mut inc = Vec::with_capacity(g.len());
        let mut prev = 0.0;
        for &v in g {
            inc.push(v - prev);
            prev = v;
        }
        ou_recursion(spec.theta, step, per_unit, &inc)
    });
    Ok(SampleBatch {
        n: cfg.observations()?,
        m,
        values: rows.concat(),
        seed,
        generator_id: GENERATOR_ID.to_string(),
    })
}

/// One path-oracle replication.
pub fn simulate_path_oracle(spec: &OUSpec, cfg: &PathConfig, seed: u64) -> Result<Vec<f64>> {
    Ok(path_oracle_batch(spec, cfg, 1, seed)?.values)
}

/// Column means and covariance of a batch, with standard errors of each.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub cov: DMatrix<f64>,
    pub cov_se: DMatrix<f64>,
}

/// Empirical moments of `batch`. The standard error of `Ĉ_ij` uses the
/// sample variance of `X_i X_j`, treating the true mean as zero.
pub fn moments(batch: &SampleBatch) -> MomentSummary {
    let (n, m) = (batch.n, batch.m as f64);
    let mut mean = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut c2 = DMatrix::<f64>::zeros(n, n);
    for row in batch.rows() {
        for i in 0..n {
            mean[i] += row[i];
            sq[i] += row[i] * row[i];
            for j in 0..=i {
                let p = row[i] * row[j];
                c[(i, j)] += p;
                c2[(i, j)] += p * p;
            }
        }
    }
    let mut mean_se = vec![0.0; n];
    for i in 0..n {
        mean[i] /= m;
        mean_se[i] = ((sq[i] / m - mean[i] * mean[i]) / m).max(0.0).sqrt();
    }
    let mut cov_se = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let e = c[(i, j)] / m;
            let se = ((c2[(i, j)] / m - e * e) / m).max(0.0).sqrt();
            c[(i, j)] = e;
            c[(j, i)] = e;
            cov_se[(i, j)] = se;
            cov_se[(j, i)] = se;
        }
    }
    MomentSummary {
        mean,
        mean_se,
        cov: c,
        cov_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{make_kernel, KernelFamily};
    use approx::assert_abs_diff_eq;

    #[test]
    fn cholesky_cases() {
        let f = chol(&CovMatrix::identity(4)).unwrap();
        assert_eq!(f.jitter(), 0.0);
        assert_eq!(f.l(), &DMatrix::identity(4, 4));

        let m = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0])).unwrap();
        let f = chol(&m).unwrap();
        assert_eq!(f.jitter(), 0.0);
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        assert!((f.l() - expected).amax() < 1e-15);

        let singular = CovMatrix::new(DMatrix::from_element(2, 2, 1.0)).unwrap();
        let f = chol(&singular).unwrap();
        assert!(f.jitter() > 0.0 && f.jitter() <= 1e-8);

        let indefinite = CovMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(matches!(chol(&indefinite), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn identity_batch_has_identity_covariance() {
        let n = 4;
        let m = 100_000;
        let b = sample(&CovMatrix::identity(n), m, 11).unwrap();
        let mo = moments(&b);
        let tol = 5.0 / (m as f64).sqrt();
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((mo.cov[(i, j)] - target).abs() < tol);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_block_independent() {
        let cov = CovMatrix::from_fn(5, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs())).unwrap();
        let a = sample(&cov, 1, 3).unwrap();
        let b = sample(&cov, 1, 3).unwrap();
        assert_eq!(a, b);
        let big = sample(&cov, 700, 3).unwrap();
        let again = sample(&cov, 700, 3).unwrap();
        assert_eq!(big.values, again.values);
        // same replication index, same normals, whatever the batch size
        for (x, y) in a.row(0).iter().zip(big.row(0)) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
        assert_ne!(sample(&cov, 1, 4).unwrap().values, a.values);
    }

    #[test]
    fn path_config_validation() {
        let ok = PathConfig {
            fine_step: 0.01,
            horizon: 5.0,
        };
        assert_eq!(ok.steps_per_unit().unwrap(), 100);
        assert!(matches!(
            PathConfig {
                fine_step: 0.2,
                horizon: 5.0
            }
            .steps_per_unit(),
            Err(Error::FineGridTooCoarse(_))
        ));
        assert!(PathConfig {
            fine_step: 0.03,
            horizon: 5.0
        }
        .steps_per_unit()
        .is_err());
        assert!(PathConfig {
            fine_step: 0.05,
            horizon: 2.5
        }
        .observations()
        .is_err());
    }

    #[test]
    fn zero_driver_gives_zero_path() {
        let x = ou_recursion(1.7, 0.01, 100, &vec![0.0; 1000]);
        assert_eq!(x, vec![0.0; 10]);
    }

    #[test]
    fn recursion_matches_closed_form_for_constant_slope() {
        // dG = c dt gives X_t = c(1 - e^{-θt})/θ, up to O(δ)
        let (theta, step, c) = (0.8, 0.001, 2.0);
        let inc = vec![c * step; 3000];
        let x = ou_recursion(theta, step, 1000, &inc);
        for (i, v) in x.iter().enumerate() {
            let t = (i + 1) as f64;
            let exact = c * (1.0 - (-theta * t).exp()) / theta;
            assert!((v - exact).abs() < 2.0 * theta * step * c);
        }
    }

    #[test]
    fn brownian_oracle_variance() {
        let spec = OUSpec::new(make_kernel(KernelFamily::Sfbm, 0.5, None).unwrap(), 1.0).unwrap();
        let cfg = PathConfig {
            fine_step: 0.01,
            horizon: 10.0,
        };
        let m = 10_000;
        let b = path_oracle_batch(&spec, &cfg, m, 5).unwrap();
        let mo = moments(&b);
        for i in 0..10 {
            let t = (i + 1) as f64;
            let exact = (1.0 - (-2.0 * t).exp()) / 2.0;
            let slack = 3.0 * mo.cov_se[(i, i)] + 2.0 * cfg.fine_step * exact;
            assert!((mo.cov[(i, i)] - exact).abs() < slack, "t={t}");
        }
        let one = simulate_path_oracle(&spec, &cfg, 5).unwrap();
        assert_eq!(one.len(), 10);
        for (x, y) in one.iter().zip(b.row(0)) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }
}

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance of the positive-semidefiniteness check.
pub const PSD_TOL: f64 = 1e-9;

/// Above this size the PSD check switches from a full eigendecomposition to
/// a power-iteration estimate of the top eigenvalue plus a shifted Cholesky.
const EIGEN_CHECK_MAX: usize = 128;

/// Symmetric covariance matrix of a finite Gaussian vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Wraps `m`, symmetrizing it. Fails if `m` is not square or is visibly
    /// asymmetric.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidGrid(format!(
                "covariance must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::EmptyInput);
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if !(asym <= 1e-12 * scale) {
            return Err(Error::InvalidGrid(format!(
                "covariance is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(CovMatrix(sym))
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        CovMatrix::new(m)
    }

    pub fn identity(n: usize) -> Self {
        CovMatrix(DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn max_diagonal(&self) -> f64 {
        self.0.diagonal().max()
    }

    /// Scaled copy `λC`.
    pub fn scaled(&self, lambda: f64) -> CovMatrix {
        CovMatrix(&self.0 * lambda)
    }

    /// Checks that the smallest eigenvalue is at least `-PSD_TOL` times the
    /// largest.
    pub fn check_psd(&self) -> Result<()> {
        let n = self.n();
        if n <= EIGEN_CHECK_MAX {
            let eig = SymmetricEigen::new(self.0.clone()).eigenvalues;
            let min = eig.min();
            let max = eig.max();
            if min < -PSD_TOL * max.max(0.0) || max < 0.0 {
                return Err(Error::NotPsd {
                    min_eig: min,
                    max_eig: max,
                });
            }
            return Ok(());
        }
        let max = self.top_eigenvalue();
        let shifted = &self.0 + DMatrix::identity(n, n) * (PSD_TOL * max);
        if shifted.cholesky().is_some() {
            Ok(())
        } else {
            let min = SymmetricEigen::new(self.0.clone()).eigenvalues.min();
            Err(Error::NotPsd {
                min_eig: min,
                max_eig: max,
            })
        }
    }

    /// Power-iteration estimate of the largest eigenvalue magnitude. Slight
    /// underestimates only make the subsequent shifted Cholesky stricter.
    fn top_eigenvalue(&self) -> f64 {
        let n = self.n();
        let mut x = nalgebra::DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut lambda = 0.0;
        for _ in 0..200 {
            let y = &self.0 * &x;
            let norm = y.norm();
            if norm == 0.0 {
                return 0.0;
            }
            let next = x.dot(&y);
            x = y / norm;
            if (next - lambda).abs() <= 1e-10 * next.abs() {
                lambda = next;
                break;
            }
            lambda = next;
        }
        lambda.max(self.max_diagonal())
    }
}

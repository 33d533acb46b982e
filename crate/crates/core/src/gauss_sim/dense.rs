//! Dense square-root factorisation for short paths.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::circulant::CLIP_TOLERANCE;

/// Largest path length accepted by the dense fallback.
pub const DENSE_MAX_LEN: usize = 4096;

/// `Σ = L Lᵀ` for the Toeplitz covariance `c_{|i−j|}`.
#[derive(Debug, Clone)]
pub struct DenseFactor {
    factor: DMatrix<f64>,
    clipped: bool,
}

impl DenseFactor {
    /// Cholesky first; if that fails, a symmetric eigendecomposition with
    /// small negative eigenvalues clipped.
    pub fn new(len: usize, acov: impl Fn(usize) -> Result<f64>) -> Result<Self> {
        if !(2..=DENSE_MAX_LEN).contains(&len) {
            return Err(Error::range("dense path length", len as f64, 2.0, DENSE_MAX_LEN as f64));
        }
        let c = (0..len).map(&acov).collect::<Result<Vec<f64>>>()?;
        let sigma = DMatrix::from_fn(len, len, |i, j| c[i.abs_diff(j)]);
        if let Some(chol) = sigma.clone().cholesky() {
            return Ok(Self {
                factor: chol.l(),
                clipped: false,
            });
        }
        let eig = sigma.symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(max > 0.0) || min < -CLIP_TOLERANCE * max {
            return Err(Error::Embedding { min_eigenvalue: min, max_eigenvalue: max });
        }
        let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&root);
        Ok(Self { factor, clipped: true })
    }

    pub fn len(&self) -> usize {
        self.factor.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clipped(&self) -> bool {
        self.clipped
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * z).iter().copied().collect()
    }
}

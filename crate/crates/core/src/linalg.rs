//! Small dense-matrix helpers over `nalgebra`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{IdmError, Result};

/// `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Nearest positive semidefinite reconstruction: symmetrize, eigendecompose,
/// and rebuild from the eigenpairs with positive eigenvalues only.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(IdmError::invalid("psd_project needs a square matrix"));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(m.clone());
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (&v * v.transpose()) * lambda;
        }
    }
    Ok(symmetrize(&out))
}

/// Sample covariance of the rows of `samples` (denominator `count - 1`).
pub fn sample_covariance(samples: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let count = samples.len();
    if count < 2 {
        return Err(IdmError::invalid("sample covariance needs at least two samples"));
    }
    let k = samples[0].len();
    if samples.iter().any(|s| s.len() != k) {
        return Err(IdmError::invalid("samples have differing lengths"));
    }
    let mut mean = alloc::vec![0.0; k];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut cov = DMatrix::zeros(k, k);
    for s in samples {
        for i in 0..k {
            let di = s[i] - mean[i];
            for j in 0..k {
                cov[(i, j)] += di * (s[j] - mean[j]);
            }
        }
    }
    Ok(cov / (count - 1) as f64)
}

/// A `K×K` covariance stored row-major, with provenance flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix {
    pub dim: usize,
    /// Row-major entries.
    pub values: Vec<f64>,
    pub symmetrized: bool,
    pub psd_projected: bool,
}

impl CovMatrix {
    pub fn from_matrix(m: &DMatrix<f64>, symmetrized: bool, psd_projected: bool) -> Self {
        let dim = m.nrows();
        let mut values = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                values.push(m[(i, j)]);
            }
        }
        CovMatrix {
            dim,
            values,
            symmetrized,
            psd_projected,
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.values)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    /// Symmetrized and PSD-projected copy.
    pub fn projected(&self) -> Result<CovMatrix> {
        Ok(CovMatrix::from_matrix(&psd_project(&self.matrix())?, true, true))
    }
}

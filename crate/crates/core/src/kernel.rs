//! Kernel functions and Gram matrix assembly for the dual solve path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, psd_shift, Mat};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("rbf gamma must be positive, got {0}")]
    BadGamma(f64),
    #[error("polynomial degree must be at least 1")]
    BadDegree,
    #[error("Gram matrix is not positive semidefinite beyond the jitter tolerance")]
    NotPsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<(), KernelError> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } => {
                if gamma > 0.0 {
                    Ok(())
                } else {
                    Err(KernelError::BadGamma(gamma))
                }
            }
            KernelSpec::Polynomial { degree, .. } => {
                if degree >= 1 {
                    Ok(())
                } else {
                    Err(KernelError::BadDegree)
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(x, y),
            KernelSpec::Rbf { gamma } => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * sq).exp()
            }
            KernelSpec::Polynomial { degree, offset } => (dot(x, y) + offset).powi(degree as i32),
        }
    }

    /// Gram matrix over the rows of `features`, built symmetric by
    /// construction and nudged onto the PSD cone when floating-point noise
    /// pushes the smallest eigenvalue slightly negative (threshold 1e-8 on
    /// the diagonal scale); anything worse is rejected.
    pub fn gram(&self, features: &Mat) -> Result<Mat, KernelError> {
        self.validate()?;
        let l = features.nrows();
        let mut k = Mat::zeros(l, l);
        for i in 0..l {
            for j in i..l {
                let v = self.eval(features.row(i), features.row(j));
                k.set(i, j, v);
                k.set(j, i, v);
            }
        }
        let scale = 1.0 + k.max_abs_diag();
        match psd_shift(&k, &[0.0, 1e-12 * scale, 1e-10 * scale, 1e-8 * scale]) {
            Some(0.0) => Ok(k),
            Some(shift) => {
                k.shift_diag(shift + 1e-10 * scale);
                Ok(k)
            }
            None => Err(KernelError::NotPsd),
        }
    }
}

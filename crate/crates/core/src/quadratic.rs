//! Gram-matrix form of the squared error, `F(b) = b'Gb - 2c'b + y'y`,
//! with column restriction for subproblems.

use nalgebra::{DMatrix, DVector};

use crate::problem::RegressionData;

#[derive(Debug, Clone)]
pub(crate) struct Quadratic {
    pub gram: DMatrix<f64>,
    pub lin: DVector<f64>,
    pub yy: f64,
}

impl Quadratic {
    pub fn from_data(data: &RegressionData) -> Self {
        let x = data.x();
        Self { gram: x.tr_mul(x), lin: x.tr_mul(data.y()), yy: data.y().norm_squared() }
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    /// Subproblem over the listed columns, in the given order.
    pub fn restrict(&self, cols: &[usize]) -> Self {
        let n = cols.len();
        Self {
            gram: DMatrix::from_fn(n, n, |i, j| self.gram[(cols[i], cols[j])]),
            lin: DVector::from_fn(n, |i, _| self.lin[cols[i]]),
            yy: self.yy,
        }
    }

    /// `||y - X b||^2`, clamped at zero against cancellation.
    pub fn value(&self, b: &[f64]) -> f64 {
        let b = DVector::from_column_slice(b);
        let quad = b.dot(&(&self.gram * &b));
        (quad - 2.0 * self.lin.dot(&b) + self.yy).max(0.0)
    }

    /// Gradient of `F`, i.e. `2(Gb - c)`.
    pub fn grad(&self, b: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(b);
        ((&self.gram * b - &self.lin) * 2.0).as_slice().to_vec()
    }

    /// Lipschitz constant of the gradient of `F`: `2 * lambda_max(G)`, slightly inflated.
    pub fn lipschitz(&self) -> f64 {
        2.0 * max_eigenvalue(&self.gram) * (1.0 + 1e-9) + f64::MIN_POSITIVE
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub(crate) fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if n <= 64 {
        return a.clone().symmetric_eigen().eigenvalues.max().max(0.0);
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7 + 3) % 11) as f64);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..20_000 {
        let w = a * &v;
        let lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let resid = (&w - &v * lambda).norm();
        v = w / norm;
        est = lambda;
        if resid <= 1e-9 * lambda.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // Power iteration approaches from below; pad the estimate.
    est * 1.01
}

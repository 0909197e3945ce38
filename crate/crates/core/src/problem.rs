//! Problem data, constraint parameters and the objective/feasibility
//! primitives shared by every solver.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entries with magnitude at or below this value count as zero for `||b||_0`.
pub const ZERO_TOL: f64 = 1e-9;

/// Default tolerance used by [`is_feasible`] callers.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// The pair `(k, s)`: at most `k` nonzeros and at most `s` negative mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    k: usize,
    s: f64,
}

impl ConstraintSpec {
    pub fn new(k: usize, s: f64) -> Result<Self> {
        if k < 1 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("s must be finite and nonnegative, got {s}")));
        }
        Ok(Self { k, s })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    /// The induced bound `1 + 2s` on `||b||_1`.
    pub fn l1_budget(&self) -> f64 {
        1.0 + 2.0 * self.s
    }

    /// Same `s`, cardinality capped at `m` (the number of variables).
    pub fn clamp_k(&self, m: usize) -> Self {
        Self { k: self.k.min(m.max(1)), s: self.s }
    }
}

/// Design matrix `X` (t x m) and response `y` (length t).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::dim("design matrix must have at least one row and column"));
        }
        if x.nrows() != y.len() {
            return Err(Error::dim(format!(
                "X has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("data contains non-finite values"));
        }
        Ok(Self { x, y })
    }

    /// Builds the data from row-major rows of `X`.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let t = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::dim(format!("row {i} has {} columns, expected {m}", r.len())));
        }
        let x = DMatrix::from_fn(t, m, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.x.ncols()
    }

    /// Rows `[start, end)` as a new data set.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_obs() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} invalid for {} observations",
                self.n_obs()
            )));
        }
        Self::new(
            self.x.rows(start, end - start).into_owned(),
            self.y.rows(start, end - start).into_owned(),
        )
    }

    /// Fitted values `X b`.
    pub fn predict(&self, w: &[f64]) -> Result<DVector<f64>> {
        self.check_len(w)?;
        Ok(&self.x * DVector::from_column_slice(w))
    }

    pub(crate) fn check_len(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.n_vars() {
            return Err(Error::dim(format!(
                "weights have length {} but X has {} columns",
                w.len(),
                self.n_vars()
            )));
        }
        Ok(())
    }
}

/// A weight vector `b`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Weights(pub Vec<f64>);

impl Weights {
    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    /// Unit vector `e_i` of length `m`.
    pub fn unit(m: usize, i: usize) -> Self {
        let mut w = Self::zeros(m);
        w.0[i] = 1.0;
        w
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    /// Number of entries with `|b_i| > ZERO_TOL`.
    pub fn nonzeros(&self) -> usize {
        self.support().len()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i].abs() > ZERO_TOL).collect()
    }

    pub fn negative_sum(&self) -> f64 {
        negative_sum(self)
    }
}

impl Deref for Weights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Weights {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Weights {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Heuristic,
    IterationLimit,
    TimeLimit,
}

/// Outcome metadata of a solve. `objective` is always `||y - X b||^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: f64,
    pub status: SolveStatus,
    pub gap: Option<f64>,
    pub iterations: usize,
    /// Wall-clock seconds.
    pub elapsed: f64,
}

/// Squared residual norm `||y - X b||^2`.
pub fn objective(data: &RegressionData, w: &[f64]) -> Result<f64> {
    let fitted = data.predict(w)?;
    Ok((data.y() - fitted).norm_squared())
}

/// Checks `|sum(b) - 1| <= tol`, `||b||_0 <= k` and `||b||_1 <= 1 + 2s + tol`.
pub fn is_feasible(w: &[f64], spec: &ConstraintSpec, tol: f64) -> bool {
    let sum: f64 = w.iter().sum();
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let nnz = w.iter().filter(|v| v.abs() > ZERO_TOL.max(tol)).count();
    w.iter().all(|v| v.is_finite())
        && (sum - 1.0).abs() <= tol
        && nnz <= spec.k()
        && l1 <= spec.l1_budget() + tol
}

/// Total short mass `-sum_{b_i < 0} b_i`.
pub fn negative_sum(w: &[f64]) -> f64 {
    -w.iter().filter(|&&v| v < 0.0).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity2(y: [f64; 2]) -> RegressionData {
        RegressionData::new(DMatrix::identity(2, 2), DVector::from_column_slice(&y)).unwrap()
    }

    #[test]
    fn objective_small_cases() {
        let data = identity2([1.0, 0.0]);
        assert_eq!(objective(&data, &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(objective(&data, &[0.0, 1.0]).unwrap(), 2.0);
    }

    #[test]
    fn objective_matches_elementwise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<Vec<f64>> =
            (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = RegressionData::from_rows(&rows, &y).unwrap();
        let mut direct = 0.0;
        for t in 0..5 {
            let mut fit = 0.0;
            for j in 0..3 {
                fit += rows[t][j] * b[j];
            }
            direct += (y[t] - fit) * (y[t] - fit);
        }
        assert!((objective(&data, &b).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_wrong_length() {
        let data = identity2([1.0, 0.0]);
        assert!(matches!(objective(&data, &[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn data_rejects_mismatched_rows() {
        let x = DMatrix::zeros(3, 2);
        let y = DVector::zeros(2);
        assert!(RegressionData::new(x, y).is_err());
        assert!(RegressionData::from_rows(&[vec![1.0, 2.0], vec![1.0]], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn constraint_spec_validation() {
        assert!(ConstraintSpec::new(0, 0.0).is_err());
        assert!(ConstraintSpec::new(1, -0.1).is_err());
        assert!(ConstraintSpec::new(1, f64::NAN).is_err());
        let c = ConstraintSpec::new(3, 0.25).unwrap();
        assert_eq!(c.l1_budget(), 1.5);
    }

    #[test]
    fn feasibility_examples() {
        let tol = FEASIBILITY_TOL;
        assert!(is_feasible(&[1.0, 0.0, 0.0], &ConstraintSpec::new(1, 0.0).unwrap(), tol));
        assert!(!is_feasible(&[1.5, -0.5, 0.0], &ConstraintSpec::new(2, 0.4).unwrap(), tol));
        assert!(is_feasible(&[1.5, -0.5, 0.0], &ConstraintSpec::new(2, 0.5).unwrap(), tol));
        // too many nonzeros
        assert!(!is_feasible(&[0.5, 0.5], &ConstraintSpec::new(1, 0.0).unwrap(), tol));
        // wrong sum
        assert!(!is_feasible(&[0.5, 0.0], &ConstraintSpec::new(2, 0.0).unwrap(), tol));
    }

    #[test]
    fn negative_sum_examples() {
        assert_eq!(negative_sum(&[1.0, 0.0]), 0.0);
        assert_eq!(negative_sum(&[1.5, -0.5]), 0.5);
    }

    fn unit_sum_vector() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0f64..2.0, 1..12).prop_map(|mut v| {
            let shift = (v.iter().sum::<f64>() - 1.0) / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= shift);
            v
        })
    }

    proptest! {
        #[test]
        fn l1_equals_one_plus_twice_negative_mass(v in unit_sum_vector()) {
            let l1: f64 = v.iter().map(|x| x.abs()).sum();
            prop_assert!((l1 - (1.0 + 2.0 * negative_sum(&v))).abs() < 1e-10);
        }

        #[test]
        fn feasibility_monotone_in_budgets(
            v in unit_sum_vector(), k in 1usize..12, s in 0.0f64..3.0, dk in 0usize..4, ds in 0.0f64..1.0
        ) {
            let tight = ConstraintSpec::new(k, s).unwrap();
            let loose = ConstraintSpec::new(k + dk, s + ds).unwrap();
            if is_feasible(&v, &tight, 1e-8) {
                prop_assert!(is_feasible(&v, &loose, 1e-8));
            }
        }

        #[test]
        fn feasible_points_respect_negative_budget(v in unit_sum_vector(), s in 0.0f64..3.0) {
            let spec = ConstraintSpec::new(v.len(), s).unwrap();
            if is_feasible(&v, &spec, 1e-8) {
                prop_assert!(negative_sum(&v) <= s + 1e-8);
            }
        }
    }
}
